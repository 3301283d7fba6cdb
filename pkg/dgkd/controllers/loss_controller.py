"""
File: dgkd/controllers/loss_controller.py
Description: Distillation losses: cross-entropy, temperature-softened KL, the combined
             teacher-student loss, the dense multi-source loss with activity gates,
             and uniform gate sampling.
"""

import numpy as np

from dgkd.models import ops
from dgkd.models.distill import GateMask
from dgkd.models.tensor import Tensor
from dgkd.utils.errors import ParameterError, StructuralError


def _logits_tensor(logits, role):
    tensor = ops.as_tensor(logits)
    if tensor.ndim != 2:
        raise StructuralError(f"{role} logits must be (batch, classes), got {tensor.shape}")
    return tensor


def _constant_logits(logits):
    """Trainer logits are read as plain values; nothing is recorded for them."""
    return logits.data if isinstance(logits, Tensor) else np.asarray(logits, dtype=np.float64)


def _check_labels(labels, batch, classes):
    labels = np.asarray(labels)
    if labels.shape != (batch,):
        raise StructuralError(f"expected {batch} labels, got shape {labels.shape}")
    if not np.issubdtype(labels.dtype, np.integer):
        raise ParameterError(f"labels must be integer class indices, got dtype {labels.dtype}")
    if labels.size and (labels.min() < 0 or labels.max() >= classes):
        raise ParameterError(f"labels must lie in [0, {classes}), got range [{labels.min()}, {labels.max()}]")
    return labels


def _kd_term(student, trainer_values, temperature, row_weights):
    """
    T^2 / B * sum_b w_b * KL(p_trainer_b || p_student_b), differentiable in the student logits only.
    """
    if trainer_values.shape != student.shape:
        raise StructuralError(f"trainer logits {trainer_values.shape} do not match student logits {student.shape}")
    batch = student.shape[0]
    target_log_probs = ops.log_softmax_array(trainer_values, temperature)
    target_probs = np.exp(target_log_probs)
    student_log_probs = ops.log_softmax_with_temperature(student, temperature)
    log_ratio = ops.add(Tensor(target_log_probs), ops.scale(student_log_probs, -1.0))
    weights = target_probs * (temperature ** 2 / batch)
    if row_weights is not None:
        weights = weights * row_weights[:, None]
    return ops.weighted_sum(log_ratio, weights)


class LossController:
    """
    Controller for every loss used in distillation.
    All methods are static and can be called without instantiation.
    """

    @staticmethod
    def cross_entropy_loss(student_logits, labels):
        """
        Mean negative log-likelihood of the labels under softmax(student_logits).

        Args:
            student_logits (Tensor): Shape (B, K)
            labels (array-like of int): Shape (B,), values in [0, K)

        Returns:
            Tensor: Scalar loss

        Raises:
            ParameterError: On labels outside [0, K)
        """
        student = _logits_tensor(student_logits, "student")
        batch, classes = student.shape
        labels = _check_labels(labels, batch, classes)
        weights = np.zeros(student.shape)
        weights[np.arange(batch), labels] = -1.0 / batch
        return ops.weighted_sum(ops.log_softmax_with_temperature(student, 1.0), weights)

    @staticmethod
    def distillation_loss(student_logits, trainer_logits, temperature):
        """
        Batch mean of T^2 * KL(softmax(z_trainer / T) || softmax(z_student / T)).

        The trainer side is a constant target: no gradient reaches it.

        Args:
            student_logits (Tensor): Shape (B, K)
            trainer_logits (Tensor | numpy.ndarray): Shape (B, K)
            temperature (float): T > 0

        Returns:
            Tensor: Scalar, non-negative

        Raises:
            StructuralError: On shape mismatch
            ParameterError: On non-positive T
        """
        student = _logits_tensor(student_logits, "student")
        if not temperature > 0:
            raise ParameterError(f"temperature must be > 0, got {temperature}")
        return _kd_term(student, _constant_logits(trainer_logits), float(temperature), None)

    @staticmethod
    def kd_total_loss(student_logits, teacher_logits, labels, cfg):
        """
        Single-trainer loss (1 - lambda) * CE + lambda * KD.

        Raises:
            StructuralError: If cfg describes more than one source
        """
        if cfg.n_sources != 1:
            raise StructuralError(f"kd_total_loss needs exactly one source, cfg has {cfg.n_sources}")
        return LossController.dgkd_total_loss(
            student_logits, [teacher_logits], labels, cfg, GateMask.all_on(1)
        )

    @staticmethod
    def dgkd_total_loss(student_logits, trainer_logits_list, labels, cfg, gates):
        """
        Dense guidance loss over every trainer source.

        Shared lambda:
            (n+1)(1 - l) * CE + l * sum_i b_i * KD_i
        Per-source lambdas:
            sum_i [(1 - l_i) * CE + l_i * b_i * KD_i]

        Source 0 is the teacher, the rest are assistants in decreasing capacity.
        Gates only switch KD terms; the CE term is never dropped. With
        ``cfg.normalize`` the whole loss is divided by the number of sources.

        Args:
            student_logits (Tensor): Shape (B, K)
            trainer_logits_list (list[Tensor | numpy.ndarray]): One (B, K) array per source
            labels (array-like of int): Shape (B,)
            cfg (DistillConfig): Temperature, lambda(s) and source count
            gates (GateMask | Sequence[int] | Sequence[GateMask]): One mask for the batch,
                or one mask per example

        Returns:
            Tensor: Scalar loss

        Raises:
            StructuralError: If the trainer list or gates disagree with cfg.n_sources
            ParameterError: If a gate mask has no active source
        """
        student = _logits_tensor(student_logits, "student")
        batch = student.shape[0]
        n_sources = cfg.n_sources
        if len(trainer_logits_list) != n_sources:
            raise StructuralError(f"{len(trainer_logits_list)} trainer logit sets given for {n_sources} sources")

        # Gate matrix, one row per example
        row_gates = _gate_matrix(gates, n_sources, batch)

        ce = LossController.cross_entropy_loss(student, labels)

        # One distillation term per source, skipping sources gated off for every example
        kd_terms = []
        for index, trainer in enumerate(trainer_logits_list):
            column = row_gates[:, index]
            if not column.any():
                continue
            weights = None if column.all() else column.astype(np.float64)
            kd_terms.append((index, _kd_term(student, _constant_logits(trainer), cfg.temperature, weights)))

        # Shared lambda: every source weighs the label term by 1 - lambda
        if cfg.source_lambdas is None:
            total = ops.scale(ce, n_sources * (1.0 - cfg.lambda_weight))
            if kd_terms:
                kd_sum = kd_terms[0][1]
                for _, term in kd_terms[1:]:
                    kd_sum = ops.add(kd_sum, term)
                total = ops.add(total, ops.scale(kd_sum, cfg.lambda_weight))
        else:
            # Per-source lambdas
            active = dict(kd_terms)
            total = None
            for index, weight in enumerate(cfg.source_lambdas):
                part = ops.scale(ce, 1.0 - weight)
                if index in active:
                    part = ops.add(part, ops.scale(active[index], weight))
                total = part if total is None else ops.add(total, part)

        # Average over sources
        if cfg.normalize:
            total = ops.scale(total, 1.0 / n_sources)
        return total

    @staticmethod
    def sample_gates(n_sources, t, rng):
        """
        Drop ``t`` distinct sources chosen uniformly without replacement.

        Args:
            n_sources (int): Number of trainer sources
            t (int): Sources to drop, 0 <= t <= n_sources - 1
            rng (numpy.random.Generator): Stream owned by the caller

        Returns:
            GateMask: Exactly t zeros

        Raises:
            ParameterError: If t is out of range
        """
        if not 0 <= t <= n_sources - 1:
            raise ParameterError(f"drop trials t={t} outside [0, {n_sources - 1}] for {n_sources} sources")
        if t == 0:
            return GateMask.all_on(n_sources)
        bits = np.ones(n_sources, dtype=int)
        bits[rng.choice(n_sources, size=t, replace=False)] = 0
        return GateMask(bits=tuple(bits.tolist()), drop_trials=t)

    @staticmethod
    def sample_gate_rows(n_sources, t, batch_size, rng):
        """Independent gate draw for each example of a mini-batch."""
        return [LossController.sample_gates(n_sources, t, rng) for _ in range(batch_size)]


def _gate_matrix(gates, n_sources, batch):
    """Normalize the accepted gate forms into a (B, n_sources) boolean matrix."""
    if isinstance(gates, GateMask):
        masks = [gates]
    elif len(gates) and isinstance(gates[0], GateMask):
        masks = list(gates)
    else:
        bits = tuple(int(b) for b in gates)
        masks = [GateMask(bits=bits, drop_trials=bits.count(0))]

    for mask in masks:
        if len(mask) != n_sources:
            raise StructuralError(f"gate mask has {len(mask)} bits for {n_sources} sources")
    if len(masks) == 1:
        return np.tile(np.asarray(masks[0].bits, dtype=bool), (batch, 1))
    if len(masks) != batch:
        raise StructuralError(f"{len(masks)} per-example gate masks for a batch of {batch}")
    return np.asarray([m.bits for m in masks], dtype=bool)
