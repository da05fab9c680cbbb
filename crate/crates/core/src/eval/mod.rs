//! Metrics, synthetic data, experiment protocols and reports.

pub mod metrics;
pub mod pca;
pub mod protocols;
pub mod report;
pub mod synthetic;

pub use metrics::{auc, auc_fraction, compute_metrics, Confusion, Metrics};
pub use pca::{pca_project, PcaProjection, PcaRow};
pub use protocols::{
    plant_contaminants, protocol_rq1, protocol_rq2, protocol_rq3, protocol_rq4, Corpus, ExperimentConfig,
};
pub use report::{write_report, ExperimentReport, Protocol, ReportRow, REPORT_SCHEMA};
pub use synthetic::{generate_synthetic, synthetic_space, GenerativeModel, SyntheticData, SyntheticSpec};
