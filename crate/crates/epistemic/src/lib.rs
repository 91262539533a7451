//! Epistemic-uncertainty toolkit for desk-scale Bayesian regression
//! studies: exact GP/NNGP inference, Hamiltonian Monte Carlo over
//! finite-width networks, PAC-Bayes bound evaluation and
//! uncertainty-driven out-of-distribution scoring and sampling.
//!
//! The crate is organized along the pipeline:
//!
//! * [`datasets`] — seeded synthetic generators and IDX image ingestion
//! * [`kernels`] — classic and NNGP covariance functions, Gram assembly
//! * [`gp`] — exact GP regression (mean, covariance, marginal likelihood,
//!   posterior-prior KL, variance decomposition)
//! * [`bnn`] — finite-width fully connected networks with exact gradients
//! * [`hmc`] — Hamiltonian Monte Carlo over network weights
//! * [`pac`] — bounded surrogate risks and the Catoni PAC-Bayes bound
//! * [`ood`] — AUROC, uncertainty fields, image-subspace probes,
//!   Boltzmann rejection sampling and uncertainty-based replay
//! * [`viz`] — CSV/PNG export of fields and images
//!
//! Everything randomized is driven by the pinned counter-based stream in
//! [`rng`], so all results are reproducible from a single seed.

pub mod bnn;
pub mod datasets;
pub mod gp;
pub mod hmc;
pub mod kernels;
pub mod linalg;
pub mod ood;
pub mod pac;
pub mod rng;
pub mod viz;
