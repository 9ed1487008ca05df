#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod abquad;
pub mod aquifer;
pub mod cli;
pub mod reference;
pub mod specfun;
