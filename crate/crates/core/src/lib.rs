//! Formula-space modelling of tandem mass spectra.
//!
//! Peak masses are decomposed into molecular formulas, a fixed formula
//! vocabulary is learned from an annotated corpus, a linear spectrum
//! predictor is trained under the peak-marginal cross entropy, and predicted
//! libraries are searched with assignment-based cosine similarity.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::type_complexity, clippy::too_many_arguments)]

pub mod cli;
pub mod decomp;
pub mod elements;
pub mod molgraph;
pub mod predictor;
pub mod scoring;
pub mod search;
pub mod spectra;
pub mod testkit;
pub mod vocab;

pub use elements::{Formula, FormulaError};
pub use molgraph::{Covariates, Instrument, MolGraph, PrecursorType};
pub use spectra::{Peak, SpectrumRecord};
