"""Distributionally robust newsvendor on a metric.

Inventory planning over a metric space with only mean/variance demand
information: hierarchical metric partitions, the covering-LP inventory
plan, exact offline fulfillment costs, and the balanced online fulfillment
policy, plus the experiment harness that reproduces the desk-scale
studies.
"""

from .demand import (
    DemandModel,
    DiscreteDistribution,
    chebyshev_probability_check,
    lambda_for_alpha,
    sample_parametric,
    scarf_quantity,
    worst_case_table1,
)
from .metric import (
    CostParams,
    MetricSpace,
    TreeMetricSpec,
    euclidean_metric,
    tree_metric,
    truncate_metric,
    validate_metric,
)
from .offline import (
    FulfillmentPlan,
    cost_upper_bound_CH,
    hierarchical_fulfillment,
    offline_cost,
    tree_closed_form_cost,
)
from .online import ArrivalSequence, SimSession, SimStep, adversary_sequence, new_session
from .partition import (
    GammaSet,
    Wshp,
    delta_schedule,
    gamma_set,
    verify_wshp,
    wshp_euclidean,
    wshp_general,
    wshp_tree,
    wshp_uniform,
)
from .planner import (
    InventoryPlan,
    gsm_rhs,
    lp_oracle_gsm,
    saa_optimal_baseline,
    solve_gsm,
)
from .transport import BACKEND as TRANSPORT_BACKEND

__version__ = "0.1.0"
