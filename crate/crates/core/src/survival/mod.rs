//! Informative-censoring simulation, neural hazard models, Kaplan–Meier,
//! IPCW influence functions and targeting of the marginal survival curve.

pub mod data;
pub mod dgp;
pub mod grid;
pub mod hazard;
pub mod ipcw;
pub mod km;
pub mod target;

pub use data::{metadata_path, write_metadata, DatasetMetadata, SurvivalDataset};
pub use dgp::{
    calibrate_eta_c, gen_covariates, invert_cumulative_hazard, sample_censoring_time, sample_event_time, simulate,
    true_marginal_survival, DgpParams, HazardTerms, CALIBRATED_ETA_C, N_SURVIVAL_COVARIATES,
};
pub use grid::TimeGrid;
pub use hazard::{
    fit_hazard, marginal_survival, node_inputs, person_time, poisson_loss, survival_curves, survival_from_hazard,
    survival_from_log_hazard, HazardFit, HazardModelSpec,
};
pub use ipcw::{ipcw_influence, IpcwInfluence, G_MIN};
pub use km::{km_estimate, KmEstimate};
pub use target::{target_survival_curve, FinalLayerSubmodel, SurvivalCurve, SurvivalTargetFit};
