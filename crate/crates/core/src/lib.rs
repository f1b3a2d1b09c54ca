#![allow(
    clippy::neg_cmp_op_on_partial_ord,
    clippy::too_many_arguments,
    clippy::type_complexity,
    clippy::needless_range_loop
)]

pub mod app;
pub mod boundary;
pub mod config;
pub mod constants;
pub mod density;
pub mod device;
pub mod dynamics;
pub mod error;
pub mod fidelity;
pub mod fit;
pub mod io;
pub mod manifest;
pub mod schedule;
pub mod sequencer;
pub mod shaping;
pub mod spectroscopy;
