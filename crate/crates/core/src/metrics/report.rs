use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{nps, psnr, ssim, subband_difference};
use crate::error::{Error, Result};
use crate::raster::Image;

/// Metrics of one test image against its reference.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub id: Option<String>,
    pub psnr_db: f64,
    /// In [-1, 1]; tables print it multiplied by 100.
    pub ssim: f64,
    pub nps_radial: Vec<(f64, f64)>,
    /// Keyed by subband name (LL, LH, HL, HH).
    pub subband_mse: BTreeMap<String, f64>,
}

impl MetricsReport {
    /// Evaluates `test` against `reference`. The NPS uses the largest
    /// power-of-two tile up to 64 that divides both dims, and is left empty
    /// when there is none.
    pub fn evaluate(reference: &Image, test: &Image, peak: f64) -> Result<Self> {
        let diff = subband_difference(reference, test)?;
        let residual = reference.with_data(test.data() - reference.data())?;
        let (h, w) = reference.dim();
        let tile = [64, 32, 16, 8, 4].into_iter().find(|&p| h % p == 0 && w % p == 0);
        let nps_radial = match tile {
            Some(p) => nps(&residual, p)?.radial,
            None => Vec::new(),
        };
        Ok(Self {
            id: test.id().or(reference.id()).map(str::to_owned),
            psnr_db: psnr(reference, test, peak)?,
            ssim: ssim(reference, test, peak)?,
            nps_radial,
            subband_mse: diff.into_iter().map(|(b, v)| (b.name().to_owned(), v)).collect(),
        })
    }

    pub fn ssim_percent(&self) -> f64 {
        100.0 * self.ssim
    }
}

/// Means over a set of per-image reports.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorpusSummary {
    pub count: usize,
    pub mean_psnr_db: f64,
    pub mean_ssim: f64,
    pub mean_subband_mse: BTreeMap<String, f64>,
    /// Bin-wise mean NPS; empty if the reports' bins disagree.
    pub mean_nps_radial: Vec<(f64, f64)>,
}

impl CorpusSummary {
    pub fn from_reports(reports: &[MetricsReport]) -> Result<Self> {
        let Some(first) = reports.first() else {
            return Err(Error::Format("cannot summarize an empty set of reports".into()));
        };
        let n = reports.len() as f64;
        let mean = |f: &dyn Fn(&MetricsReport) -> f64| reports.iter().map(f).sum::<f64>() / n;
        let mean_subband_mse = first
            .subband_mse
            .keys()
            .map(|k| (k.clone(), mean(&|r| r.subband_mse.get(k).copied().unwrap_or(f64::NAN))))
            .collect();
        let same_bins = reports.iter().all(|r| {
            r.nps_radial.len() == first.nps_radial.len()
                && r.nps_radial.iter().zip(&first.nps_radial).all(|(a, b)| a.0 == b.0)
        });
        let mean_nps_radial = if same_bins {
            first.nps_radial.iter().enumerate().map(|(i, &(f, _))| (f, mean(&|r| r.nps_radial[i].1))).collect()
        } else {
            Vec::new()
        };
        Ok(Self {
            count: reports.len(),
            mean_psnr_db: mean(&|r| r.psnr_db),
            mean_ssim: mean(&|r| r.ssim),
            mean_subband_mse,
            mean_nps_radial,
        })
    }
}
