pub mod airy;
pub mod appendix;
pub mod boundary_layer;
pub mod channel;
pub mod config;
pub mod error;
pub mod linear;
pub mod nonlinear;
pub mod run;
pub mod scaling;
pub mod spectral;
