//! Analysis of interval-training studies: magnitude-estimation normalization,
//! random-intercept mixed models with marginal effects, response-time
//! exclusions, pre/post comparisons and questionnaire scoring.

pub mod descriptive;
pub mod error;
pub mod filter;
pub mod glmm;
pub mod marginal;
pub mod normalize;
pub mod prepost;
pub mod quadrature;
pub mod questionnaire;
pub mod table;
pub mod ttest;

pub use error::{Result, StatsError};
pub use filter::{filter_response_times, FilterReport, RESPONSE_FLOOR_S};
pub use glmm::{fit_frame, fit_glmm, Family, FitOptions, GlmmFit, GlmmSpec, ModelFrame, Outcome, Term};
pub use marginal::{contrast, marginal_predictions, prediction_curve, Estimate, MarginalMode, MarginalSummary};
pub use normalize::{normalize_magnitudes, spatial_summary, SpatialSummary};
pub use prepost::{guess_distributions, pre_post_test, GuessDistribution, PrePostResult};
pub use questionnaire::{questionnaire_scores, ItemSummary, ParticipantAnswers, Q2Item};
pub use table::{Observation, ObservationTable, Phase};
pub use ttest::{t_test, TTest, TTestKind};
