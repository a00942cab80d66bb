"""Affinity-based training-data labeling.

Pipeline: per-layer CNN filter maps -> ranked prototypes -> an
N x (alpha*N) affinity matrix -> one diagonal-Gaussian mixture per
affinity function -> a multivariate-Bernoulli ensemble over the one-hot
base predictions -> cluster-to-class assignment from a small development
set -> probabilistic labels. A separate theory module bounds the
development-set size needed for a confident assignment.
"""

from .affinity import AffinityFunctionDescriptor, affinity_score, build_affinity_matrix, cosine
from .config import EmControls, PipelineConfig
from .dataio import (AffinityMatrix, DatasetManifest, DevSet, FilterMap, FinalLabels,
                     load_affinity, read_devset, read_filtermap, read_manifest,
                     save_affinity, write_devset, write_filtermap, write_manifest)
from .ensemble import BernoulliParams, fit_ensemble, one_hot_concat
from .errors import (AfflabelError, ConfigError, DegenerateFitError,
                     InfeasibleQueryError, ParseError, StageError)
from .gmm import GmmParams, e_step, fit_base_model, m_step_gaussian
from .mapping import ClusterClassMapping, apply_mapping, mapping_weights, solve_mapping
from .pipeline import (LabelingResult, labeling_accuracy, run_from_affinity,
                       run_from_matrix, run_label)
from .prototypes import Prototype, PrototypeSet, extract_all_prototypes, select_top_z
from .synth import PlantedSpec, generate_planted, sweep
from .theory import (mapping_probability_bound, min_devset_size, multinomial_pmf,
                     pl_correct_class, pl_correct_class_enumerated)

__version__ = "0.1.0"
