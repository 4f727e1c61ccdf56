//! Probabilistic price-path forecasting for hourly intraday electricity
//! products, multivariate scoring, and fixed-volume trading backtests.

pub mod backtest;
pub mod bands;
pub mod cgm;
pub mod marginal_quantiles;
pub mod market_data;
pub mod path_samplers;
pub mod point_forecast;
pub mod scoring;
pub mod stats;
pub mod synth;
pub mod trading;
