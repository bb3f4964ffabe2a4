"""Meta-learning a pool of reusable neural modules.

Meta-training interleaves per-task simulated-annealing steps over module
compositions with gradient steps on the shared module weights; a new task is
solved by structure search alone or with light gradient fine-tuning.
"""

from .backend import active_backend, available_backends, use_backend
from .annealing import AnnealSchedule, accept, bounce, online_search
from .metalearn import (
    MetaState,
    TrainConfig,
    bouncegrad_train,
    grad_step,
    inner_adapt,
    maml_eval,
    metatest_solve,
    rng_stream,
)
from .nn import (
    Arch,
    OptState,
    init_params,
    mlp_backward,
    mlp_forward,
    optimizer_init,
    optimizer_step,
    param_count,
)
from .pool import (
    ModuleGroup,
    ModulePool,
    PoolView,
    checkpoint_load,
    checkpoint_save,
    init_pool,
    module_forward,
)
from .report import (
    MethodArtifact,
    ResultRow,
    ResultTable,
    SharingMatrix,
    evaluate_methods,
    emit_report,
    match_modules_to_basis,
    sharing_matrix,
)
from .structures import (
    ComposeScheme,
    ConcatHeadsScheme,
    SingleScheme,
    Structure,
    SumScheme,
    TreeNode,
    TreeScheme,
    WeightedEnsembleScheme,
    enumerate_structures,
    initial_structure,
    propose,
    scheme_from_spec,
    structure_forward,
    structure_from_json,
    structure_gradient,
    structure_to_json,
    task_error,
)
from .tasks import (
    BASIS_NAMES,
    Dataset,
    TaskData,
    TaskSuite,
    basis_function,
    gen_sine_split,
    gen_sine_suite,
    gen_sum_split,
    gen_sum_suite,
    load_csv_suite,
    save_csv_suite,
    standardize,
)

__version__ = "0.1.0"
