use serde::{Deserialize, Serialize};

use super::DetectionError;
use crate::geometry::BoundingBox;

/// Prior box in center form. Coordinates are normalized and may extend past
/// the frame; [`Anchor::to_box`] clamps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Anchor {
    pub cx: f64,
    pub cy: f64,
    pub w: f64,
    pub h: f64,
}

impl Anchor {
    pub fn to_box(&self) -> BoundingBox {
        BoundingBox::from_center(self.cx, self.cy, self.w, self.h).expect("anchor coordinates are finite")
    }
}

/// SSD prior-box layout.
///
/// `aspect_ratios` holds either one list shared by every feature map or one
/// list per map. With `extra_scale_box`, each cell also gets a square box of
/// scale `sqrt(s_k * s_{k+1})`, taking `s_{k+1} = 1` past the last map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnchorConfig {
    pub feature_map_sizes: Vec<u32>,
    pub scales: Vec<f64>,
    pub aspect_ratios: Vec<Vec<f64>>,
    #[serde(default)]
    pub extra_scale_box: bool,
    #[serde(default = "default_center_variance")]
    pub center_variance: f64,
    #[serde(default = "default_size_variance")]
    pub size_variance: f64,
}

fn default_center_variance() -> f64 {
    0.1
}

fn default_size_variance() -> f64 {
    0.2
}

impl Default for AnchorConfig {
    /// Six maps for a 224x224 input, scales spaced linearly over `[0.1, 0.9]`.
    fn default() -> Self {
        let maps = [28, 14, 7, 4, 2, 1];
        let n = maps.len();
        let scales = (0..n).map(|k| 0.1 + 0.8 * k as f64 / (n - 1) as f64).collect();
        Self {
            feature_map_sizes: maps.to_vec(),
            scales,
            aspect_ratios: vec![vec![1.0, 2.0, 0.5]],
            extra_scale_box: true,
            center_variance: default_center_variance(),
            size_variance: default_size_variance(),
        }
    }
}

impl AnchorConfig {
    pub fn validate(&self) -> Result<(), DetectionError> {
        let bad = |msg: &str| Err(DetectionError::InvalidAnchorConfig(msg.to_string()));
        if self.feature_map_sizes.is_empty() {
            return bad("at least one feature map is required");
        }
        if self.feature_map_sizes.contains(&0) {
            return bad("feature map sizes must be positive");
        }
        if self.scales.len() != self.feature_map_sizes.len() {
            return bad("one scale per feature map is required");
        }
        if self.scales.iter().any(|s| !(*s > 0.0 && *s <= 1.0)) {
            return bad("scales must lie in (0, 1]");
        }
        if self.scales.windows(2).any(|w| w[0] >= w[1]) {
            return bad("scales must be strictly increasing");
        }
        if self.aspect_ratios.len() != 1 && self.aspect_ratios.len() != self.feature_map_sizes.len() {
            return bad("aspect_ratios must hold one shared list or one list per feature map");
        }
        if self.aspect_ratios.iter().any(|r| r.is_empty()) {
            return bad("every aspect ratio list needs at least one ratio");
        }
        if self.aspect_ratios.iter().flatten().any(|r| !(r.is_finite() && *r > 0.0)) {
            return bad("aspect ratios must be positive");
        }
        if !(self.center_variance > 0.0 && self.size_variance > 0.0) {
            return bad("variances must be positive");
        }
        Ok(())
    }

    fn ratios_for(&self, map: usize) -> &[f64] {
        if self.aspect_ratios.len() == 1 {
            &self.aspect_ratios[0]
        } else {
            &self.aspect_ratios[map]
        }
    }

    pub fn boxes_per_cell(&self, map: usize) -> usize {
        self.ratios_for(map).len() + usize::from(self.extra_scale_box)
    }

    /// Total anchors: sum over maps of `grid^2 * boxes_per_cell`.
    pub fn anchor_count(&self) -> usize {
        self.feature_map_sizes.iter().enumerate().map(|(m, &g)| (g as usize).pow(2) * self.boxes_per_cell(m)).sum()
    }
}

/// Enumerates anchors map by map, then row, column, and per-cell box
/// (ratios in configured order, extra square box last).
pub fn generate_anchors(config: &AnchorConfig) -> Result<Vec<Anchor>, DetectionError> {
    config.validate()?;
    let mut anchors = Vec::with_capacity(config.anchor_count());
    for (m, &grid) in config.feature_map_sizes.iter().enumerate() {
        let scale = config.scales[m];
        let next = config.scales.get(m + 1).copied().unwrap_or(1.0);
        let extra = (scale * next).sqrt();
        let g = f64::from(grid);
        for row in 0..grid {
            let cy = (f64::from(row) + 0.5) / g;
            for col in 0..grid {
                let cx = (f64::from(col) + 0.5) / g;
                for &ratio in config.ratios_for(m) {
                    let r = ratio.sqrt();
                    anchors.push(Anchor { cx, cy, w: scale * r, h: scale / r });
                }
                if config.extra_scale_box {
                    anchors.push(Anchor { cx, cy, w: extra, h: extra });
                }
            }
        }
    }
    Ok(anchors)
}
