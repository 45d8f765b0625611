"""Exception hierarchy shared across the pipeline."""


class FacekinError(Exception):
    """Base class for all pipeline errors."""


# ---------------------------------------------------------------------------
# ingest / schema errors

class SchemaError(FacekinError):
    """A structured input file violates its schema."""


class UnsupportedFormat(FacekinError):
    """Frame container or encoding not handled by the loader."""


class InconsistentDimensions(FacekinError):
    def __init__(self, frame_index: int):
        super().__init__(f"frame {frame_index} has different dimensions than frame 0")
        self.frame_index = frame_index


class FewerThanTwoFrames(FacekinError):
    """Optical flow needs at least one consecutive frame pair."""


class CountMismatch(SchemaError):
    def __init__(self, expected: int, got: int, what: str = "landmarks"):
        super().__init__(f"expected {expected} {what}, got {got}")
        self.expected = expected
        self.got = got


class EmptyDescriptorSet(SchemaError):
    """Descriptor file declares no descriptors."""


class NegativeWeight(SchemaError):
    def __init__(self, name: str, weight: float):
        super().__init__(f"descriptor {name!r} has negative weight {weight}")
        self.name = name


# ---------------------------------------------------------------------------
# mesh / geometry errors

class DegenerateTriangle(FacekinError):
    def __init__(self, triangle_id: int, detail: str = "zero signed area"):
        super().__init__(f"triangle {triangle_id}: {detail}")
        self.triangle_id = triangle_id


class InconsistentWinding(FacekinError):
    def __init__(self, triangle_id: int):
        super().__init__(f"triangle {triangle_id} winds opposite to triangle 0")
        self.triangle_id = triangle_id


class DisconnectedMesh(FacekinError):
    """Mesh graph is not a single connected component."""


class IndexOutOfRange(FacekinError):
    def __init__(self, triangle_id: int, index: int, n_landmarks: int):
        super().__init__(
            f"triangle {triangle_id} references landmark {index} "
            f"but mesh has {n_landmarks}"
        )
        self.triangle_id = triangle_id


class MeshMismatch(FacekinError):
    """Frame mesh and canonical model do not share a triangulation."""


class OutsideFace(FacekinError):
    def __init__(self, point):
        super().__init__(f"point {tuple(point)} is outside the face region")


# ---------------------------------------------------------------------------
# flow / smoothing errors

class SizeMismatch(FacekinError):
    """Consecutive frames differ in size."""


class DisconnectedGraph(FacekinError):
    """Dense landmark graph is not connected; spectral filtering undefined."""


class KTooLarge(FacekinError):
    def __init__(self, k: int, n: int):
        super().__init__(f"spectral mode count {k} exceeds landmark count {n}")


class LengthMismatch(FacekinError):
    """Paired per-landmark arrays disagree in length."""


# ---------------------------------------------------------------------------
# feature / classifier errors

class EmptySequence(FacekinError):
    """Feature extraction needs at least one displacement field."""


class DegenerateTraining(FacekinError):
    """Training set does not contain at least two classes."""
