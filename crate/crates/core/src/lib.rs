//! Contact-web grasp skill training: superquadric objects, a two-finger
//! gripper, contact-web rewards, a quasi-static grasp environment, domain
//! randomization, a from-scratch PPO learner and robustness sweeps.
//!
//! The crate is `no_std` (with `alloc`); file formats, threading and the
//! command-line tool live in the `graspweb` crate.

#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod env;
pub mod eval;
pub mod geometry;
pub mod gripper;
pub mod math;
pub mod ppo;
pub mod randomize;
pub mod reward;
pub mod sanity;
pub mod scripted;
pub mod web;
