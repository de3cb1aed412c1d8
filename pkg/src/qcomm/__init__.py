"""Any-bit quantization codec and deterministic collective-communication simulator."""

from .bfloat16 import bf16_bits_to_f32, bf16_round, f32_to_bf16_bits
from .codec import (
    GroupMeta,
    QuantConfig,
    QuantizedChunk,
    ScaleEncoding,
    Scheme,
    bit_split,
    decode_chunk,
    default_group_size,
    encode_chunk,
    footprint_breakdown,
    footprint_bytes,
    int_to_scale,
    pack_codes,
    parse_chunk,
    rtn_decode_group,
    rtn_encode_group,
    scale_to_int,
    spike_decode_group,
    spike_encode_group,
    unpack_codes,
)
from .collectives import (
    CollectiveResult,
    ComputeEvent,
    RankState,
    Stage,
    StageTrace,
    TrafficLedger,
    TransferEvent,
    all2all_dispatch_q,
    hierarchical_two_step_q,
    ring_allreduce_ref,
    two_step_allreduce_q,
    volume_report,
)
from .errors import (
    CodeRangeError,
    ConfigError,
    DataError,
    DecodeFormatError,
    NotApplicableError,
)
from .reporting import ErrorReport, emit_table, measure_codec_error, sweep_codec
from .scheduling import (
    CostModel,
    Schedule,
    Task,
    bubble_time,
    build_pipeline_schedule,
    build_serial_schedule,
    makespan,
    pipeline_lower_bound,
    utilization,
)
from .synthetic import SyntheticSpec, default_spiky_spec, gen_synthetic, rank_seeds
from .topology import (
    DeviceSpec,
    LinkKind,
    LinkSpec,
    Topology,
    cross_numa_partition,
    load_topology,
    preset,
)

__version__ = "0.1.0"
