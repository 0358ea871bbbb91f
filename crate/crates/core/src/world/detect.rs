use serde::{Deserialize, Serialize};

use super::{cell_center, distance, AgentPose, Floorplan};
use crate::catalog::{Catalog, ClassId};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectorConfig {
    /// Horizontal field of view in degrees.
    pub fov_deg: f64,
    /// Maximum detection distance in meters.
    pub range: f64,
    /// Success / visibility threshold in meters.
    pub visibility_distance: f64,
    /// Multiplier on footprint area / distance² for the bounding-box area.
    pub bbox_scale: f64,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        DetectorConfig {
            fov_deg: 90.0,
            range: 5.0,
            visibility_distance: 1.5,
            bbox_scale: 1.0,
        }
    }
}

impl DetectorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.fov_deg > 0.0 && self.fov_deg <= 360.0) {
            return Err(Error::Config("detector fov_deg must lie in (0, 360]".into()));
        }
        if !(self.range > 0.0 && self.visibility_distance > 0.0 && self.bbox_scale > 0.0) {
            return Err(Error::Config("detector distances and scale must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub class: ClassId,
    pub x_c: f64,
    pub y_c: f64,
    pub bbox_area: f64,
    pub distance: f64,
}

/// Ground-truth detector. Returns at most one detection per class (the nearest
/// instance), sorted by class id. No occlusion.
pub fn detect(fp: &Floorplan, pose: &AgentPose, catalog: &Catalog, cfg: &DetectorConfig) -> Vec<Detection> {
    let eye = cell_center(pose.cell, fp.cell_size);
    let half_fov = cfg.fov_deg / 2.0;
    let pitch_step = pose.pitch / 30;
    let mut best: Vec<Option<Detection>> = vec![None; catalog.len()];

    for o in &fp.objects {
        let d = distance(eye, o.position);
        if d > cfg.range {
            continue;
        }
        let band = catalog.get(o.class).height_band.offset();
        let tilt = pitch_step - band;
        if tilt.abs() > 1 {
            continue;
        }
        let bearing = if d < 1e-12 {
            0.0
        } else {
            let abs = (o.position.1 - eye.1).atan2(o.position.0 - eye.0).to_degrees();
            wrap_degrees(abs - pose.heading as f64)
        };
        if bearing.abs() > half_fov + 1e-9 {
            continue;
        }
        if best[o.class].is_some_and(|b| b.distance <= d) {
            continue;
        }
        let area = o.footprint.0 * o.footprint.1;
        let bbox_area = if d < 1e-12 {
            1.0
        } else {
            (cfg.bbox_scale * area / (d * d)).clamp(0.0, 1.0)
        };
        best[o.class] = Some(Detection {
            class: o.class,
            x_c: (0.5 - bearing / cfg.fov_deg).clamp(0.0, 1.0),
            y_c: (0.5 + 0.3 * tilt as f64).clamp(0.0, 1.0),
            bbox_area,
            distance: d,
        });
    }
    best.into_iter().flatten().collect()
}

/// Success predicate: detected in this frame and within the visibility distance.
pub fn is_visible(detections: &[Detection], class: ClassId, cfg: &DetectorConfig) -> bool {
    detections
        .iter()
        .any(|d| d.class == class && d.distance <= cfg.visibility_distance)
}

pub fn visible_classes(detections: &[Detection], cfg: &DetectorConfig) -> Vec<ClassId> {
    detections
        .iter()
        .filter(|d| d.distance <= cfg.visibility_distance)
        .map(|d| d.class)
        .collect()
}

pub fn target_visible(
    fp: &Floorplan,
    pose: &AgentPose,
    class: ClassId,
    catalog: &Catalog,
    cfg: &DetectorConfig,
) -> bool {
    is_visible(&detect(fp, pose, catalog, cfg), class, cfg)
}

/// Maps an angle in degrees to (-180, 180].
fn wrap_degrees(a: f64) -> f64 {
    let mut a = a.rem_euclid(360.0);
    if a > 180.0 {
        a -= 360.0;
    }
    a
}
