//! Core library for discovering and annotating coordinated information
//! campaigns in social-media corpora.
//!
//! The pipeline runs in stages:
//!
//! 1. [`ingest`] parses line-delimited corpus files into validated posts
//!    and computes corpus statistics.
//! 2. [`coordination`] links accounts that publish identical ordered
//!    hashtag sequences and extracts campaigns as connected components.
//! 3. [`concern`] multi-labels posts with a concern taxonomy through
//!    pluggable classifier backends and exports instruction-tuning pairs.
//! 4. [`annotate`] slices campaigns by concern and event window and asks a
//!    chat backend for goal, tactic, and framing annotations.
//! 5. [`validation`] generates synthetic posts from a ground-truth campaign
//!    catalogue, re-annotates them, and judges semantic equivalence.
//! 6. [`metrics`] scores multi-label predictions with bootstrap dispersion
//!    and constant-label baselines.
//!
//! All chat-backend traffic goes through [`gateway`], which caches
//! responses on disk so reruns are deterministic and network-free.

pub mod annotate;
pub mod concern;
pub mod coordination;
pub mod gateway;
pub mod ingest;
pub mod metrics;
pub mod parallel;
pub mod validation;
