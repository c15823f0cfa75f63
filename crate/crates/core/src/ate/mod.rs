//! Average treatment effect estimation with a DragonNet-style model:
//! plug-in, targeted regularisation, AIPW, post-hoc TMLE and the TDA
//! variants.

pub mod data;
pub mod dragonnet;
pub mod estimators;
pub mod tda;

pub use data::{AteDataset, Split, N_COVARIATES};
pub use dragonnet::{fit_dragonnet, DragonFit, DragonNet, Predictions};
pub use estimators::{
    aipw_ate, clever_covariate, clip_propensity, eif_ate, fluctuate, fluctuation_epsilon, plugin_ate, post_tmle,
    wald_ci, AteEstimate, AteMethod, Nuisance, PROPENSITY_CLIP, Z_95,
};
pub use tda::{
    block_indices, partition_indices, plateau_candidates, tda_ate, tda_ate_indices, tda_direct_ate, treg_estimate,
    AteInfluence, HeadBlock, HeadPartition, HeadSubmodel, TdaAteFit,
};
