pub mod ambient;
pub mod catalog;
pub mod chart;
pub mod connection;
pub mod error;
pub mod immersion;
pub mod linalg;
pub mod report;
pub mod run;
pub mod scalars;
pub mod sigma;
pub mod slant;
