//! Bias auditing and debiased-data synthesis for long-answer multiple-choice
//! VQA corpora.
//!
//! This crate is `no_std` (it needs `alloc`). It carries the data model and
//! every piece of math: n-gram overlap statistics, embedding similarity
//! statistics, the distractor weight matrix with a Kuhn–Munkres solver, mask
//! geometry and the tri-pass inpainting schedule, the contrastive training
//! losses with analytic gradients, and evaluation-set construction.
//!
//! File formats, HTTP providers and the command-line tool live in the
//! `debias` crate.
#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod corpus;
pub mod embed;
pub mod evalset;
pub mod ict;
pub mod matching;
pub mod region;
pub mod text;
pub mod variants;

pub use corpus::{
    AnswerOption, ConfidenceRecord, Corpus, ImageVariant, ModelTag, Provenance, Region, Relevance, Sample, Shape,
    Variant, VisualPremise,
};
