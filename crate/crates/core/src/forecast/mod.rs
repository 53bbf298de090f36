//! Multi-node time-series forecasting with a linear-map EHH model, plus the
//! persistence baseline and MAE/R²/RMSE scoring.

mod data;
mod metrics;
mod model;

pub use data::{
    component_names, ingest_csv, ingest_csv_path, make_samples, split, synthetic_dataset, Samples, SeriesDataset, Split, SyntheticConfig,
};
pub use metrics::{evaluate, ForecastMetrics};
pub use model::{forecast_all, forecast_run, ForecastConfig, ForecastResult};
