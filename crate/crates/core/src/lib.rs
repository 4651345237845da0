pub mod circuits;
pub mod cmni;
pub mod config;
pub mod dataset;
pub mod env;
pub mod evalreport;
pub mod neural;
pub mod oracle;
pub mod pipeline;
pub mod probes;
