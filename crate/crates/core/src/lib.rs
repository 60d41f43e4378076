pub mod basepatterns;
pub mod error;
pub mod frequency;
pub mod series;
pub mod spectral;
pub mod refseries;
pub mod alignment;
pub mod synthbench;
pub mod forecaster;
pub mod evalharness;
pub mod cli;
