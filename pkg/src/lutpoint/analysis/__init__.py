from .bench import BenchReport, bench
from .levelset import LevelSetSlice, probe_level_set, sublevel_containment
from .metrics import MetricsReport, evaluate, retrieval_map
from .sweeps import PointSweepRow, VoxelSweepRow, sweep_points, sweep_voxels
