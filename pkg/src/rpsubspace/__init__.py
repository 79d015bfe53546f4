"""Random projections for data lying on unions of linear subspaces."""

from .baseline import PcaModel, pca_fit, pca_project
from .bounds import (CosineInterval, cosine_interval, inner_product_interval, jl_success_prob,
                     min_projection_dim, multiclass_success_prob, projected_margin_bound,
                     recommended_dim_for_subspace)
from .data import LabeledDataset, ParseError, generate_union, load_matrix, save_matrix, split
from .geometry import (MarginReport, SubspaceBasis, check_independence, cosine, dataset_margin,
                       margin_report, subspace_margin)
from .randproj import (CancelableTemplate, ProjectionMatrix, generate, issue_template, match_template,
                       project, project_dataset, reissue_template)
from .sparserep import Dictionary, SolverError, SparseCode, basis_pursuit, src_classify, ssc_support_check

__version__ = "0.1.0"
