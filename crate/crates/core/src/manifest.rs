//! Campaign manifest: bands, positions, link budget and thresholds.

use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::apdp::{NoiseWindow, PeakThresholds};
use crate::dispersion::DsSource;
use crate::error::{Error, Result};
use crate::largescale::{LinkBudget, Scenario};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DistanceMode {
    /// Horizontal Tx–Rx separation.
    #[serde(rename = "2d", alias = "D2", alias = "d2")]
    D2,
    /// Slant distance including the antenna height offset.
    #[serde(rename = "3d", alias = "D3", alias = "d3")]
    D3,
}

impl std::str::FromStr for DistanceMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "2d" | "d2" => Ok(DistanceMode::D2),
            "3d" | "d3" => Ok(DistanceMode::D3),
            other => Err(Error::invalid(format!("unknown distance mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Position {
    pub position_id: u32,
    pub scenario: Scenario,
    pub tx_pos_m: f64,
    pub rx_pos_m: f64,
    pub distance_2d_m: f64,
    pub distance_3d_m: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Thresholds {
    pub snr_gate_db: f64,
    pub peak_window_db: f64,
    pub floor_margin_db: f64,
    pub deconv_floor_db: f64,
    pub noise_window: NoiseWindow,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            snr_gate_db: crate::apdp::DEFAULT_SNR_GATE_DB,
            peak_window_db: crate::apdp::DEFAULT_PEAK_WINDOW_DB,
            floor_margin_db: crate::apdp::DEFAULT_FLOOR_MARGIN_DB,
            deconv_floor_db: crate::calib::DEFAULT_FLOOR_DB,
            noise_window: NoiseWindow::default(),
        }
    }
}

impl Thresholds {
    pub fn peak(&self) -> PeakThresholds {
        PeakThresholds {
            floor_margin_db: self.floor_margin_db,
            peak_window_db: self.peak_window_db,
        }
    }
}

/// Corridor dimensions shared by every position.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Layout {
    pub length_m: f64,
    pub tx_height_m: f64,
    pub rx_height_m: f64,
}

impl Default for Layout {
    fn default() -> Self {
        Self {
            length_m: 41.0,
            tx_height_m: 1.95,
            rx_height_m: 1.45,
        }
    }
}

fn default_bands() -> Vec<f64> {
    vec![2.4, 5.0, 6.0]
}
fn default_bandwidth() -> f64 {
    320e6
}
fn default_record_len() -> usize {
    4800
}
fn default_reps() -> usize {
    5
}
fn default_snapshots() -> usize {
    400
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CampaignManifest {
    #[serde(default = "default_bands")]
    pub bands_ghz: Vec<f64>,
    #[serde(default = "default_bandwidth")]
    pub bandwidth_hz: f64,
    #[serde(default = "default_record_len")]
    pub record_len: usize,
    #[serde(default = "default_reps")]
    pub reps_per_position: usize,
    #[serde(default = "default_snapshots")]
    pub snapshots_per_rep: usize,
    #[serde(default)]
    pub link_budget: LinkBudget,
    #[serde(default)]
    pub thresholds: Thresholds,
    /// Mandatory: which distance enters the path-loss fits.
    pub distance_mode: DistanceMode,
    #[serde(default)]
    pub layout: Layout,
    #[serde(default)]
    pub ds_source: DsSource,
    pub positions: Vec<Position>,
}

const DISTANCE_TOL_M: f64 = 1e-3;

impl CampaignManifest {
    /// 37 LOS receiver positions with the transmitter at the corridor start.
    ///
    /// Positions 1–21 are 0.8 m apart starting 1 m from Tx; positions 21–37
    /// are 1.4 m apart, ending 39.4 m from Tx inside the 41 m corridor.
    pub fn default_corridor(distance_mode: DistanceMode) -> Self {
        let layout = Layout::default();
        let positions = (1..=37u32)
            .map(|id| {
                // tenths of a metre, kept integral to avoid drift
                let tenths = if id <= 21 {
                    10 + 8 * (id - 1)
                } else {
                    170 + 14 * (id - 21)
                };
                let rx = tenths as f64 / 10.0;
                position_at(id, Scenario::Los, 0.0, rx, &layout)
            })
            .collect();
        Self {
            bands_ghz: default_bands(),
            bandwidth_hz: default_bandwidth(),
            record_len: default_record_len(),
            reps_per_position: default_reps(),
            snapshots_per_rep: default_snapshots(),
            link_budget: LinkBudget::default(),
            thresholds: Thresholds::default(),
            distance_mode,
            layout,
            ds_source: DsSource::default(),
            positions,
        }
    }

    /// The LOS corridor plus NLOS positions 3–37 at the same receiver
    /// coordinates. The NLOS transmitter location is not known, so it shares
    /// the LOS transmitter coordinate; the truth model carries the NLOS
    /// excess loss.
    pub fn default_corridor_with_nlos(distance_mode: DistanceMode) -> Self {
        let mut m = Self::default_corridor(distance_mode);
        let nlos: Vec<Position> = m
            .positions
            .iter()
            .filter(|p| p.position_id >= 3)
            .map(|p| Position {
                scenario: Scenario::Nlos,
                ..p.clone()
            })
            .collect();
        m.positions.extend(nlos);
        m
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let m: Self = serde_json::from_str(text)?;
        m.validate()?;
        Ok(m)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn distance(&self, p: &Position) -> f64 {
        match self.distance_mode {
            DistanceMode::D2 => p.distance_2d_m,
            DistanceMode::D3 => p.distance_3d_m,
        }
    }

    pub fn delay_bin_s(&self) -> f64 {
        1.0 / self.bandwidth_hz
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidInput(m));
        if self.bands_ghz.is_empty() {
            return bad("manifest lists no bands".into());
        }
        for (i, b) in self.bands_ghz.iter().enumerate() {
            if !(b.is_finite() && *b > 0.0) {
                return bad(format!("band {b} GHz is not positive"));
            }
            if self.bands_ghz[..i].iter().any(|c| (c - b).abs() < 1e-6) {
                return bad(format!("band {b} GHz listed twice"));
            }
        }
        if !(self.bandwidth_hz.is_finite() && self.bandwidth_hz > 0.0) {
            return bad("bandwidth must be positive".into());
        }
        if self.record_len < 2 || self.record_len > u32::MAX as usize {
            return bad(format!("record length {} out of range", self.record_len));
        }
        if self.reps_per_position == 0 || self.snapshots_per_rep == 0 {
            return bad("reps and snapshots per rep must be at least 1".into());
        }
        self.link_budget.validate()?;
        let t = &self.thresholds;
        if !(t.snr_gate_db.is_finite() && t.snr_gate_db >= 0.0) {
            return bad("SNR gate must be a non-negative dB value".into());
        }
        if !(t.peak_window_db.is_finite() && t.peak_window_db > 0.0) {
            return bad("peak window must be positive".into());
        }
        if !(t.floor_margin_db.is_finite() && t.floor_margin_db >= 0.0) {
            return bad("floor margin must be non-negative".into());
        }
        if !(t.deconv_floor_db.is_finite() && t.deconv_floor_db < 0.0) {
            return bad("deconvolution floor must be negative dB".into());
        }
        t.noise_window.range(self.record_len)?;
        let l = &self.layout;
        if !(l.length_m.is_finite() && l.length_m > 0.0 && l.tx_height_m > 0.0 && l.rx_height_m > 0.0) {
            return bad("corridor layout values must be positive".into());
        }
        if self.positions.is_empty() {
            return bad("manifest lists no positions".into());
        }
        let mut seen = HashSet::new();
        for p in &self.positions {
            if !seen.insert((p.position_id, p.scenario)) {
                return bad(format!("{} position {} listed twice", p.scenario, p.position_id));
            }
            self.validate_position(p)?;
        }
        Ok(())
    }

    fn validate_position(&self, p: &Position) -> Result<()> {
        let id = p.position_id;
        let l = &self.layout;
        for v in [p.tx_pos_m, p.rx_pos_m] {
            if !(v.is_finite() && (0.0..=l.length_m).contains(&v)) {
                return Err(Error::invalid(format!("position {id}: coordinate {v} outside corridor")));
            }
        }
        if !(p.distance_2d_m.is_finite() && p.distance_2d_m > 0.0) {
            return Err(Error::invalid(format!("position {id}: 2D distance must be positive")));
        }
        if (p.distance_2d_m - (p.rx_pos_m - p.tx_pos_m).abs()).abs() > DISTANCE_TOL_M {
            return Err(Error::invalid(format!(
                "position {id}: 2D distance disagrees with Tx/Rx coordinates"
            )));
        }
        let dh = l.tx_height_m - l.rx_height_m;
        if (p.distance_3d_m - p.distance_2d_m.hypot(dh)).abs() > DISTANCE_TOL_M {
            return Err(Error::invalid(format!(
                "position {id}: 3D distance disagrees with 2D distance and antenna heights"
            )));
        }
        Ok(())
    }

    /// Positions closer than the 1 m CI reference distance.
    pub fn below_reference_distance(&self) -> Vec<u32> {
        self.positions
            .iter()
            .filter(|p| self.distance(p) < 1.0)
            .map(|p| p.position_id)
            .collect()
    }
}

/// A position with distances derived from coordinates and layout heights.
pub fn position_at(id: u32, scenario: Scenario, tx_pos_m: f64, rx_pos_m: f64, layout: &Layout) -> Position {
    let d2 = (rx_pos_m - tx_pos_m).abs();
    Position {
        position_id: id,
        scenario,
        tx_pos_m,
        rx_pos_m,
        distance_2d_m: d2,
        distance_3d_m: d2.hypot(layout.tx_height_m - layout.rx_height_m),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_layout() {
        let m = CampaignManifest::default_corridor(DistanceMode::D2);
        m.validate().unwrap();
        assert_eq!(m.positions.len(), 37);
        assert_eq!(m.positions[0].distance_2d_m, 1.0);
        assert!((m.positions[20].distance_2d_m - 17.0).abs() < 1e-12);
        assert!((m.positions[36].distance_2d_m - 39.4).abs() < 1e-12);
        assert!((m.positions[1].distance_3d_m - (1.8f64 * 1.8 + 0.25).sqrt()).abs() < 1e-12);
        assert_eq!(m.record_len, 4800);
        assert_eq!(m.thresholds.snr_gate_db, 25.0);
    }

    #[test]
    fn distance_mode_is_mandatory() {
        let m = CampaignManifest::default_corridor(DistanceMode::D3);
        let mut v: serde_json::Value = serde_json::from_str(&m.to_json().unwrap()).unwrap();
        assert_eq!(v["distance_mode"], "3d");
        v.as_object_mut().unwrap().remove("distance_mode");
        assert!(CampaignManifest::from_json(&v.to_string()).is_err());
    }

    #[test]
    fn minimal_json_gets_defaults() {
        let text = r#"{
            "distance_mode": "2d",
            "positions": [{"position_id": 1, "scenario": "LOS", "tx_pos_m": 0.0,
                           "rx_pos_m": 4.0, "distance_2d_m": 4.0, "distance_3d_m": 4.0311}]
        }"#;
        let m = CampaignManifest::from_json(text).unwrap();
        assert_eq!(m.bands_ghz, vec![2.4, 5.0, 6.0]);
        assert_eq!(m.reps_per_position, 5);
        assert_eq!(m.link_budget.gt_dbi, 2.0);
    }

    #[test]
    fn inconsistent_distances_rejected() {
        let mut m = CampaignManifest::default_corridor(DistanceMode::D2);
        m.positions[3].distance_2d_m += 0.5;
        assert!(m.validate().is_err());
        let mut m = CampaignManifest::default_corridor(DistanceMode::D2);
        m.positions[3].distance_3d_m = m.positions[3].distance_2d_m;
        assert!(m.validate().is_err());
        let mut m = CampaignManifest::default_corridor(DistanceMode::D2);
        m.positions[4].position_id = 1;
        assert!(m.validate().is_err());
        let mut m = CampaignManifest::default_corridor(DistanceMode::D2);
        m.positions.clear();
        assert!(m.validate().is_err());
    }

    #[test]
    fn nlos_positions_share_ids() {
        let m = CampaignManifest::default_corridor_with_nlos(DistanceMode::D2);
        assert_eq!(m.positions.len(), 37 + 35);
        m.validate().unwrap();
        let mut dup = m.clone();
        dup.positions.push(dup.positions[40].clone());
        assert!(dup.validate().is_err());
    }

    #[test]
    fn flags_short_distances() {
        let mut m = CampaignManifest::default_corridor(DistanceMode::D2);
        m.positions[0] = position_at(1, Scenario::Los, 0.0, 0.9, &m.layout);
        assert_eq!(m.below_reference_distance(), vec![1]);
        m.distance_mode = DistanceMode::D3;
        assert!(m.below_reference_distance().is_empty());
    }
}
