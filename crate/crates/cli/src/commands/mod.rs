pub mod audio;
pub mod data;
pub mod model;
pub mod report;
