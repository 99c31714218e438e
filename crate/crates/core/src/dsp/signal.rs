use serde::{Deserialize, Serialize};

use crate::edf::normalize_label;
use crate::error::{Error, Result};

/// Montage used for ICA and feature extraction, in feature order.
pub const MOTOR_MONTAGE: [&str; 8] = ["FC3", "FCZ", "FC4", "C3", "C1", "CZ", "C2", "C4"];

/// Channels × samples, labels normalized.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiChannelSignal {
    pub labels: Vec<String>,
    pub data: Vec<Vec<f64>>,
    pub fs: f64,
}

impl MultiChannelSignal {
    pub fn new(labels: Vec<String>, data: Vec<Vec<f64>>, fs: f64) -> Result<Self> {
        if labels.len() != data.len() {
            return Err(Error::Shape(format!(
                "{} labels for {} channels",
                labels.len(),
                data.len()
            )));
        }
        if !(fs.is_finite() && fs > 0.0) {
            return Err(Error::InvalidInput(format!("sampling rate must be positive, got {fs}")));
        }
        if let Some(first) = data.first() {
            if data.iter().any(|ch| ch.len() != first.len()) {
                return Err(Error::Shape("channels differ in length".into()));
            }
        }
        let labels: Vec<String> = labels.iter().map(|l| normalize_label(l)).collect();
        for (i, l) in labels.iter().enumerate() {
            if labels[..i].contains(l) {
                return Err(Error::DuplicateChannel(l.clone()));
            }
        }
        Ok(MultiChannelSignal { labels, data, fs })
    }

    pub fn n_channels(&self) -> usize {
        self.data.len()
    }

    pub fn n_samples(&self) -> usize {
        self.data.first().map_or(0, Vec::len)
    }

    pub fn channel_index(&self, label: &str) -> Option<usize> {
        let wanted = normalize_label(label);
        self.labels.iter().position(|l| *l == wanted)
    }

    /// Picks channels in the order of `wanted`.
    pub fn select_channels<S: AsRef<str>>(&self, wanted: &[S]) -> Result<MultiChannelSignal> {
        let mut labels = Vec::with_capacity(wanted.len());
        let mut data = Vec::with_capacity(wanted.len());
        for w in wanted {
            let i = self
                .channel_index(w.as_ref())
                .ok_or_else(|| Error::MissingChannel(w.as_ref().to_string()))?;
            labels.push(self.labels[i].clone());
            data.push(self.data[i].clone());
        }
        MultiChannelSignal::new(labels, data, self.fs)
    }

    pub fn channel_means(&self) -> Vec<f64> {
        self.data
            .iter()
            .map(|ch| {
                if ch.is_empty() {
                    0.0
                } else {
                    ch.iter().sum::<f64>() / ch.len() as f64
                }
            })
            .collect()
    }
}
