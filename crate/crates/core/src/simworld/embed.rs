//! In-process embedding provider with planted attribute structure.
//!
//! Attribute `e` embeds as the basis vector `b_e`. A patch embeds as
//! `[g * mean_px sal_e(px) for each e, mean_px (1 - max_e g * sal_e(px))]`, normalized,
//! where `g` is the provider gain. The last coordinate is the background share: a blank
//! patch points only along it and scores 0 against every attribute.

use std::collections::HashMap;

use super::palette::{all_styles, salience};
use crate::image::RgbImage;
use crate::pyramid::{EmbeddingProvider, ProviderError};

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticProvider {
    channels: Vec<String>,
    /// Salience rows, one per known colour.
    table: Vec<Vec<f64>>,
    colors: HashMap<[u8; 3], usize>,
    gain: f64,
}

impl SyntheticProvider {
    /// Provider for a fixed attribute channel list. Colours are taken from every
    /// category style; anything else (floor, walls, sky) has zero salience.
    pub fn new(channels: &[String]) -> Self {
        let channels: Vec<String> = channels.iter().map(|c| c.trim().to_lowercase()).collect();
        let mut table = Vec::new();
        let mut colors = HashMap::new();
        for style in all_styles() {
            for (color, part) in [(style.body, false), (style.part, true)] {
                if colors.contains_key(&color) {
                    continue;
                }
                colors.insert(color, table.len());
                table.push(
                    channels
                        .iter()
                        .map(|a| salience(style.name, part, a).clamp(0.0, 1.0))
                        .collect(),
                );
            }
        }
        Self {
            channels,
            table,
            colors,
            gain: 1.0,
        }
    }

    /// Same provider with every salience scaled by `gain` (clamped to [0, 1]).
    pub fn with_gain(&self, gain: f64) -> Self {
        Self {
            gain: gain.clamp(0.0, 1.0),
            ..self.clone()
        }
    }

    pub fn gain(&self) -> f64 {
        self.gain
    }

    pub fn channels(&self) -> &[String] {
        &self.channels
    }

    /// Salience of each channel for one colour; zeros for unknown colours.
    pub fn color_salience(&self, color: [u8; 3]) -> Vec<f64> {
        match self.colors.get(&color) {
            Some(&i) => self.table[i].clone(),
            None => vec![0.0; self.channels.len()],
        }
    }

    /// Unnormalized embedding of one patch.
    pub fn raw_embedding(&self, patch: &RgbImage) -> Vec<f64> {
        let c = self.channels.len();
        let mut acc = vec![0.0; c + 1];
        let n = (patch.width() as usize * patch.height() as usize).max(1) as f64;
        let mut last: Option<([u8; 3], Option<usize>)> = None;
        for px in patch.pixels() {
            let idx = match last {
                Some((col, idx)) if col == px.0 => idx,
                _ => {
                    let idx = self.colors.get(&px.0).copied();
                    last = Some((px.0, idx));
                    idx
                }
            };
            match idx {
                Some(i) => {
                    let row = &self.table[i];
                    let mut peak = 0.0f64;
                    for (a, s) in acc.iter_mut().zip(row) {
                        let v = self.gain * s;
                        *a += v;
                        peak = peak.max(v);
                    }
                    acc[c] += 1.0 - peak;
                }
                None => acc[c] += 1.0,
            }
        }
        acc.iter_mut().for_each(|a| *a /= n);
        acc
    }
}

fn normalize(mut v: Vec<f64>) -> Vec<f64> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    } else if let Some(last) = v.last_mut() {
        // only reachable for an empty patch
        *last = 1.0;
    }
    v
}

impl EmbeddingProvider for SyntheticProvider {
    fn dim(&self) -> usize {
        self.channels.len() + 1
    }

    fn embed_images(&self, patches: &[RgbImage]) -> Result<Vec<Vec<f64>>, ProviderError> {
        Ok(patches
            .iter()
            .map(|p| normalize(self.raw_embedding(p)))
            .collect())
    }

    fn embed_texts(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, ProviderError> {
        texts
            .iter()
            .map(|t| {
                let key = t.trim().to_lowercase();
                let i = self
                    .channels
                    .iter()
                    .position(|c| *c == key)
                    .ok_or_else(|| ProviderError::UnknownText(t.clone()))?;
                let mut v = vec![0.0; self.dim()];
                v[i] = 1.0;
                Ok(v)
            })
            .collect()
    }
}
