"""Exception hierarchy for the toolkit.

Every module raises subclasses of :class:`HiPromptError` so the CLI can map
failures to named diagnostics and a nonzero exit status.
"""


class HiPromptError(Exception):
    """Base class for all toolkit errors."""


# --- taxonomy / hierarchy ---

class CycleDetected(HiPromptError):
    """An edge path in the taxonomy returns to an ancestor."""


class MultipleParents(HiPromptError):
    """A child label appears under two different parents."""


class Disconnected(HiPromptError):
    """A label is unreachable from the root."""


class UnknownScheme(HiPromptError):
    """Unrecognized virtual-node connection scheme."""


class UnknownLabel(HiPromptError):
    """A label name does not exist in the hierarchy."""


# --- encoder ---

class IdOutOfRange(HiPromptError):
    """A token id is outside the vocabulary range."""


class LengthExceeded(HiPromptError):
    """Input sequence is longer than the configured maximum length."""


class PositionOutOfRange(HiPromptError):
    """A requested sequence position is out of bounds."""


# --- prompt assembly ---

class TemplateOverflow(HiPromptError):
    """The hierarchy is too deep for the configured maximum length."""


class MissingVerbalizerMap(HiPromptError):
    """Hard prompt requested without a label-to-word verbalizer map."""


class LayerOutOfRange(HiPromptError):
    """Layer index outside 1..L."""


# --- structure injection ---

class DimensionMismatch(HiPromptError):
    """Node feature count or width does not match the graph/params."""


class MissingVirtualNode(HiPromptError):
    """Propagated features lack a virtual layer node."""


# --- losses ---

class NonFiniteScore(HiPromptError):
    """A loss received NaN or infinite scores."""


class LayerMismatch(HiPromptError):
    """Per-layer score set does not cover the expected layers."""


class EmptyPartition(HiPromptError):
    """A loss requires both positives and negatives to be non-empty."""


# --- pipeline ---

class DivergedLoss(HiPromptError):
    """Training loss became non-finite."""


class EmptyDataset(HiPromptError):
    """A required dataset split is empty."""


class FractionOutOfRange(HiPromptError):
    """Sampling fraction outside (0, 1]."""


class LabelOutsideUniverse(HiPromptError):
    """A prediction or gold label is not in the evaluation universe."""


# --- data io ---

class MalformedRecord(HiPromptError):
    """A corpus line is not a valid record."""
