//! Datasets, client partitioning and backdoor poisoning.

mod dataset;
mod idx;
mod partition;
mod poison;
mod synthetic;

pub use dataset::{ClientShard, Dataset};
pub use idx::load_idx;
pub use partition::dirichlet_partition;
pub use poison::{
    apply_trigger, make_subpopulation_backdoor, trigger_test_set, BackdoorTask, Corner, Selector,
    TriggerSpec,
};
pub use synthetic::{gen_synthetic, DEFAULT_SEPARATION};
