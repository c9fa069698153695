//! Click and quit models behind the per-user MDP.
//!
//! Both are linear scorers `w·x + b`. The click model is fit by logistic
//! regression on instance click labels. The quit model only sees page-level
//! (bag) labels, "did the user keep browsing after this page", and is fit
//! as a multi-instance SVM that scores the probability of continuing. Platt
//! scaling turns either score into a probability.

pub mod calibration;
pub mod data;
pub mod linear;
pub mod metrics;
pub mod mil;
pub mod persist;

pub use calibration::{
    apply_platt, binned_calibration_rmse, fit_platt, fit_platt_bags, Calibration,
};
pub use data::{Bag, BagLabel, Instance, SessionLog};
pub use linear::{train_click_model, train_hinge, HingeParams, LinearModel, LogisticParams, TrainTrace};
pub use metrics::auc;
pub use mil::{
    bag_level_auc, bag_score, nsk_bag_representation, train_quit_model_mil,
    train_quit_model_no_mil, MilFit, MilParams,
};
pub use persist::ScoredModel;
