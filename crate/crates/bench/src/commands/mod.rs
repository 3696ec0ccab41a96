pub mod calibrate;
pub mod evaluate;
pub mod gen_data;
pub mod mape;
pub mod runtime;
