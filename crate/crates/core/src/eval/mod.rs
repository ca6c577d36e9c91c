//! Coherence, latent probes, CCA scores and learned-vs-analytic ratio errors.

mod cca;
mod coherence;
mod probe;
mod ratio_report;

pub use cca::{cca_correlation, default_components, Cca, CCA_REGULARIZATION};
pub use coherence::{coherence_report, cross_coherence, joint_coherence, synergy_coherence, CoherenceReport, Labeler};
pub use probe::{latent_probe, CodeSelector, LinearProbe, PROBE_LR, PROBE_STEPS};
pub use ratio_report::{
    check_rig_matches, density_weighted_mae, ratio_oracle_report, AnalyticFactors, ErrorSummary, FactorLogitSource,
    RatioReport,
};
