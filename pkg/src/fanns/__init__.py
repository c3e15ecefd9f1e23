"""Filtered approximate nearest neighbor search indexes and benchmarks."""

from .data import (ORDERED, ORDERED_MAX, ORDERED_MIN, SET, UNORDERED,
                   AttributeColumn, AttributeSchema, Dataset, Item, Query,
                   SchemaError, validate_dataset, validate_items)
from .distance import distance_cosine, distance_euclidean, euclidean_to_many
from .filters import (And, ExactMatch, Filter, Not, Or, Range, SetContains,
                      eval_filter, filter_from_dict, matching_mask,
                      selectivity, validate_filter)
from .hnsw import (HnswIndex, HnswParams, build_hnsw, search_induced,
                   search_unfiltered, search_visit_all)
from .labelgraph import (LabelGraphIndex, build_label_graph, label_multi_query,
                         label_query, label_reachability_report)
from .oracle import KnnResult, batch_ground_truth, exact_filtered_knn
from .quantization import (CapsIndex, IvfIndex, KMeansModel, PqCodebook,
                           PqSpec, adc_distance, adc_table, build_caps,
                           build_ivf, caps_query, ivf_query, kmeans_train,
                           pq_decode, pq_encode, pq_train, rii_query)
from .rangeindex import (SegmentGraphIndex, SegmentTreeIndex,
                         build_segment_graph, build_segment_tree,
                         minimal_cover, segment_graph_query_leq,
                         segment_graph_query_range, segment_tree_query)
from .strategies import (AttributeIndexes, RouterConfig, afanns_query_fused,
                         build_attribute_indexes, fused_distance,
                         matching_ids, post_filter_query, pre_filter_query,
                         route_and_query)

__version__ = "0.1.0"
