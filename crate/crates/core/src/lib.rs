//! Automatic GRBAS grade estimation from sustained-vowel recordings.
//!
//! Audio is resampled, augmented and cut into one-second clips, turned into
//! power cepstrograms and classified into four grades by a small two-path
//! convolutional network. Numeric code is generic over [`Scalar`]; the
//! aliases below pin the common precisions.

pub mod audio;
pub mod augment;
pub mod data;
pub mod features;
pub mod grade;
pub mod metrics;
pub mod net;
pub mod nn;
pub mod scalar;
pub mod synth;
pub mod train;

pub use grade::Grade;
pub use scalar::Scalar;

pub type Tensor32 = nn::Tensor<f32>;
pub type Tensor64 = nn::Tensor<f64>;
pub type GrbasNet32 = net::GrbasNet<f32>;
pub type GrbasNet64 = net::GrbasNet<f64>;
pub type Cepstrogram32 = features::Cepstrogram<f32>;
pub type Cepstrogram64 = features::Cepstrogram<f64>;
/// Exact ratio used for accuracy and mean absolute error.
pub type ExactRatio = num_rational::Ratio<u64>;

/// Any error raised by the library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Audio(#[from] audio::AudioError),
    #[error(transparent)]
    Augment(#[from] augment::AugmentError),
    #[error(transparent)]
    Features(#[from] features::FeatureError),
    #[error(transparent)]
    Nn(#[from] nn::NnError),
    #[error(transparent)]
    Net(#[from] net::NetError),
    #[error(transparent)]
    Data(#[from] data::DataError),
    #[error(transparent)]
    Train(#[from] train::TrainError),
    #[error(transparent)]
    Metrics(#[from] metrics::MetricsError),
    #[error(transparent)]
    Synth(#[from] synth::SynthError),
}
