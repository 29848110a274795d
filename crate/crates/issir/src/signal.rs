//! Time-domain signals.

use crate::Scalar;

/// A mono time-domain signal with its sample rate.
#[derive(Debug, Clone, PartialEq)]
pub struct Signal<T> {
    pub samples: Vec<T>,
    pub sample_rate: u32,
}

impl<T: Scalar> Signal<T> {
    pub fn new(samples: Vec<T>, sample_rate: u32) -> Self {
        assert!(sample_rate > 0, "sample rate must be positive");
        Self {
            samples,
            sample_rate,
        }
    }

    pub fn zeros(len: usize, sample_rate: u32) -> Self {
        Self::new(vec![T::zero(); len], sample_rate)
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    pub fn energy(&self) -> T {
        self.samples.iter().map(|&s| s * s).sum()
    }

    pub fn rms(&self) -> T {
        if self.samples.is_empty() {
            return T::zero();
        }
        (self.energy() / T::from_f64_c(self.samples.len() as f64)).sqrt()
    }

    /// Element-wise sum of several equally long signals.
    pub fn mix(signals: &[Signal<T>]) -> Signal<T> {
        assert!(!signals.is_empty(), "nothing to mix");
        let len = signals[0].len();
        let sr = signals[0].sample_rate;
        assert!(
            signals.iter().all(|s| s.len() == len && s.sample_rate == sr),
            "mix requires equal lengths and sample rates"
        );
        let mut out = vec![T::zero(); len];
        for s in signals {
            for (o, &x) in out.iter_mut().zip(&s.samples) {
                *o += x;
            }
        }
        Signal::new(out, sr)
    }

    pub fn scaled(&self, gain: T) -> Signal<T> {
        Signal::new(
            self.samples.iter().map(|&s| s * gain).collect(),
            self.sample_rate,
        )
    }
}
