"""WheelArm: a kinematic wheelchair-mounted-arm simulator with a
teleoperation service, demonstration recorder, stream aligner, and a
from-scratch sequence-model baseline."""

__version__ = "0.1.0"

FORMAT_VERSIONS = {
    "chain": "wheelarm-chain/1",
    "robot": "wheelarm-robot/1",
    "scene": "wheelarm-scene/1",
    "dataset": "wheelarm-dataset/1",
    "script": "wheelarm-script/1",
    "model": "wheelarm-model/1",
}
