//! Special functions and random variate generation.

mod chisq;
mod gamma;
mod random;

pub use chisq::{central_chisq_ln_pdf, noncentral_chisq_pdf, NC_SERIES_CAP};
pub use gamma::{ln_gamma, pochhammer};
pub use random::{sample_gamma, sample_noncentral_chisq, sample_poisson, RandomSource};
