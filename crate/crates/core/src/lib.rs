#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod episodes;
pub mod harness;
pub mod learners;
pub mod meta_policy;
pub mod numcore;
pub mod objectives;
pub mod rng;
