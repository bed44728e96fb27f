//! On-disk formats: PNG rasters, the DFLD displacement-field container, and
//! JSON report records.

pub mod field;
pub mod raster;
pub mod report;
