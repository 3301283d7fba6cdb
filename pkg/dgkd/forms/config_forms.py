"""
File: dgkd/forms/config_forms.py
Description: WTForms schema for experiment configuration files.
             One form per JSON section; field defaults are the resolved defaults.
"""

from wtforms import Field, Form
from wtforms.fields import BooleanField, FloatField, IntegerField, StringField
from wtforms.fields.core import UnboundField
from wtforms.validators import AnyOf, DataRequired, NumberRange, ValidationError

from dgkd.models.distill import GATE_GRANULARITIES
from dgkd.models.experiment import DATASET_KINDS, DEFAULT_COMPARE_MODES, SCHEMA_VERSION
from dgkd.models.model_spec import FAMILIES
from dgkd.models.plan import LR_SCHEDULES, MODES

DENOMINATORS = ("lower", "upper", "union")


class StrictIntegerField(IntegerField):
    """Integer field that refuses booleans and floats instead of truncating them."""

    def process_data(self, value):
        if value is not None and (isinstance(value, bool) or not isinstance(value, int)):
            self.data = None
            raise ValueError(f"Not an integer: {value!r}")
        self.data = value


class StrictStringField(StringField):
    def process_data(self, value):
        if value is not None and not isinstance(value, str):
            self.data = None
            raise ValueError(f"Not a string: {value!r}")
        self.data = value


class StrictFloatField(FloatField):
    def process_data(self, value):
        if value is not None and (isinstance(value, bool) or not isinstance(value, (int, float))):
            self.data = None
            raise ValueError(f"Not a number: {value!r}")
        self.data = float(value) if value is not None else None


class StrictBooleanField(BooleanField):
    def process_data(self, value):
        if not isinstance(value, bool):
            self.data = False
            raise ValueError(f"Not a boolean: {value!r}")
        self.data = value


class ListField(Field):
    """
    JSON array of scalars, stored as a tuple.

    Args:
        item_type (type): int, float or str
        allow_none (bool): Accept null (the default may also be None)
    """

    def __init__(self, label=None, validators=None, item_type=int, allow_none=False, **kwargs):
        super().__init__(label, validators, **kwargs)
        self.item_type = item_type
        self.allow_none = allow_none

    def process_data(self, value):
        if value is None:
            if not self.allow_none:
                self.data = None
                raise ValueError("A list is required")
            self.data = None
            return
        if not isinstance(value, (list, tuple)):
            self.data = None
            raise ValueError(f"Not a list: {value!r}")
        items = []
        for item in value:
            if isinstance(item, bool):
                self.data = None
                raise ValueError(f"Unexpected boolean {item!r} in list")
            if self.item_type is float and isinstance(item, (int, float)):
                items.append(float(item))
            elif isinstance(item, self.item_type):
                items.append(item)
            else:
                self.data = None
                raise ValueError(f"Unexpected item {item!r}, expected {self.item_type.__name__}")
        self.data = tuple(items)


def form_keys(form_class):
    """Names of the fields declared on a form class (the JSON keys it accepts)."""
    return {name for name in dir(form_class) if isinstance(getattr(form_class, name, None), UnboundField)}


def positive(form, field):
    if field.data is not None and not field.data > 0:
        raise ValidationError("Must be greater than 0.")


def optional_min(minimum):
    def _check(form, field):
        if field.data is not None and field.data < minimum:
            raise ValidationError(f"Must be at least {minimum}.")
    return _check


def items_within(minimum=None, maximum=None):
    def _check(form, field):
        for item in field.data or ():
            if (minimum is not None and item < minimum) or (maximum is not None and item > maximum):
                raise ValidationError(f"Every item must lie in [{minimum}, {maximum}].")
    return _check


def items_in(choices):
    def _check(form, field):
        unknown = [item for item in field.data or () if item not in choices]
        if unknown:
            raise ValidationError(f"Unknown values {unknown}; expected some of {list(choices)}.")
    return _check


def non_empty(form, field):
    if not field.data:
        raise ValidationError("Must not be empty.")


class ExperimentForm(Form):
    """
    Top-level keys. ``dataset``, ``plans``, ``analysis``, ``sweep`` and ``compare``
    are sections validated by their own forms.
    """
    version = StrictIntegerField("Schema Version", default=SCHEMA_VERSION, validators=[AnyOf([SCHEMA_VERSION])])
    seeds = ListField("Seeds", item_type=int, default=(0,), validators=[non_empty, items_within(minimum=0)])
    output_dir = StrictStringField("Output Directory", default=None)


class DatasetForm(Form):
    kind = StrictStringField("Kind", default="synthetic_spiral", validators=[AnyOf(DATASET_KINDS)])
    seed = StrictIntegerField("Generator Seed", default=0, validators=[NumberRange(min=0)])
    augment = StrictBooleanField("Augmentation", default=False)
    normalize = StrictBooleanField("Normalization", default=False)
    num_classes = StrictIntegerField("Classes", default=None, validators=[optional_min(2)])
    input_shape = ListField("Input Shape", item_type=int, default=None, allow_none=True,
                            validators=[items_within(minimum=1)])
    images = StrictStringField("Train Images", default=None)
    labels = StrictStringField("Train Labels", default=None)
    test_images = StrictStringField("Test Images", default=None)
    test_labels = StrictStringField("Test Labels", default=None)
    train_files = ListField("Train Files", item_type=str, default=())
    test_files = ListField("Test Files", item_type=str, default=())


class LadderEntryForm(Form):
    family = StrictStringField("Family", default=None, validators=[DataRequired(), AnyOf(FAMILIES)])
    depth = StrictIntegerField("Depth", default=None, validators=[NumberRange(min=1)])
    widths = ListField("Widths", item_type=int, default=(), validators=[items_within(minimum=1)])


class DistillForm(Form):
    temperature = StrictFloatField("Temperature", default=4.0, validators=[positive])
    lambda_weight = StrictFloatField("Lambda", default=0.5, validators=[NumberRange(min=0.0, max=1.0)])
    source_lambdas = ListField("Per-source Lambdas", item_type=float, default=None, allow_none=True,
                               validators=[items_within(0.0, 1.0)])
    drop_trials = StrictIntegerField("Drop Trials", default=1, validators=[NumberRange(min=0)])
    normalize = StrictBooleanField("Normalize", default=False)
    gate_granularity = StrictStringField("Gate Granularity", default="batch", validators=[AnyOf(GATE_GRANULARITIES)])


class TrainForm(Form):
    lr = StrictFloatField("Learning Rate", default=0.1, validators=[NumberRange(min=0.0)])
    momentum = StrictFloatField("Momentum", default=0.9, validators=[NumberRange(min=0.0, max=0.999999)])
    weight_decay = StrictFloatField("Weight Decay", default=1e-4, validators=[NumberRange(min=0.0)])
    nesterov = StrictBooleanField("Nesterov", default=True)
    epochs = StrictIntegerField("Epochs", default=30, validators=[NumberRange(min=0)])
    batch_size = StrictIntegerField("Batch Size", default=64, validators=[NumberRange(min=1)])
    lr_schedule = StrictStringField("Schedule", default="constant", validators=[AnyOf(LR_SCHEDULES)])
    trainer_workers = StrictIntegerField("Trainer Workers", default=1, validators=[NumberRange(min=1)])


class PlanForm(Form):
    """Scalar plan keys; ``ladder``, ``distill``, ``stage_distill`` and ``train`` are sections."""
    name = StrictStringField("Plan Name", default=None, validators=[DataRequired()])
    mode = StrictStringField("Mode", default="dense", validators=[AnyOf(MODES)])
    expand = StrictBooleanField("Expand Ladder", default=False)
    stochastic_for_tas = StrictBooleanField("Stochastic Assistants", default=False)
    cache_trainer_logits = StrictBooleanField("Cache Trainer Logits", default=False)


class AnalysisForm(Form):
    overlap_denominator = StrictStringField("Overlap Denominator", default="lower", validators=[AnyOf(DENOMINATORS)])


class SweepForm(Form):
    drop_trials = ListField("Drop Trials", item_type=int, default=None, allow_none=True,
                            validators=[items_within(minimum=0)])


class CompareForm(Form):
    modes = ListField("Modes", item_type=str, default=DEFAULT_COMPARE_MODES, validators=[non_empty, items_in(MODES)])

