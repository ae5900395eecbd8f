//! Early, mid-level and late fusion of the two streams.

mod features;
mod late;
mod svm;

pub use features::{
    assemble_early_input, deinterleave, features_csv, interleave_features, l2_normalize, FusedFeature, NORM_FLOOR,
};
pub use late::{estimate_priors, late_fuse, ClassPriors, PRIOR_EPSILON};
pub use svm::{svm_predict, train_linear_svm, SvmHyper, SvmModel};
