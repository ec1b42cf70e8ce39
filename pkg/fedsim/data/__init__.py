from fedsim.data.dataset import ClientDataset, Dataset, Partition, content_hash, manifest_bytes
from fedsim.data.idx import encode_idx, load_idx, parse_idx
from fedsim.data.partition import partition_iid, partition_label_skew
from fedsim.data.sampling import OverlapMeta, build_overlap_meta, round_half_away, sample_meta_set, split_rows
from fedsim.data.synthetic import synth_classification

__all__ = [
    "ClientDataset", "Dataset", "OverlapMeta", "Partition",
    "build_overlap_meta", "content_hash", "encode_idx", "load_idx", "manifest_bytes", "parse_idx",
    "partition_iid", "partition_label_skew", "round_half_away", "sample_meta_set", "split_rows",
    "synth_classification",
]
