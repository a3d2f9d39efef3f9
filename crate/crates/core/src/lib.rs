//! Calibration, shape fitting and pose reconstruction for a 16-IMU hand
//! capture glove, together with a simulator for the glove and the
//! evaluation metrics used to judge the results.

pub mod acquisition;
pub mod glove_sim;
pub mod diffhcal;
pub mod hand_model;
pub mod metrics;
pub mod so3;
