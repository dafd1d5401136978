use std::io::Write;

use serde::{Deserialize, Serialize};

use super::model::Model;
use super::physics::{analytic_radial, RadialKey};
use crate::autodiff::ParamStore;
use crate::error::{Error, Result};
use crate::layers::Layer;

/// One learned radial function sampled on a grid of distances.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RadialCurve {
    pub layer: String,
    pub l_filter: usize,
    pub l_in: usize,
    pub channel: usize,
    pub learned: Vec<f64>,
    pub analytic: Option<Vec<f64>>,
}

impl RadialCurve {
    pub fn label(&self) -> String {
        format!("{}_f{}_i{}_c{}", self.layer, self.l_filter, self.l_in, self.channel)
    }
}

/// `r_min + i (r_max − r_min) / (steps − 1)`; a single step gives `r_min`.
pub fn radius_grid(r_min: f64, r_max: f64, steps: usize) -> Result<Vec<f64>> {
    if steps == 0 || !(r_min >= 0.0) || !(r_max >= r_min) {
        return Err(Error::invalid("radius_grid", format!("need steps >= 1 and 0 <= r_min <= r_max, got {steps}, [{r_min}, {r_max}]")));
    }
    if steps == 1 {
        return Ok(vec![r_min]);
    }
    Ok((0..steps).map(|i| r_min + (r_max - r_min) * i as f64 / (steps - 1) as f64).collect())
}

/// Every learned radial function of every convolution in the model.
pub fn radial_curves(model: &Model, params: &ParamStore, radii: &[f64]) -> Result<Vec<RadialCurve>> {
    let mut out = Vec::new();
    for layer in model.network().layers() {
        let Layer::Convolution(conv) = layer else { continue };
        for ((l_filter, l_in), _) in conv.filters() {
            let columns: Vec<Vec<f64>> = radii
                .iter()
                .map(|&r| conv.radial_eval(params, l_filter, l_in, r))
                .collect::<Result<_>>()?;
            let key = RadialKey { task: model.task(), l_filter, l_in };
            let analytic: Option<Vec<f64>> = radii.iter().map(|&r| analytic_radial(key, r)).collect();
            for channel in 0..conv.input_channels[&l_in] {
                out.push(RadialCurve {
                    layer: conv.name.clone(),
                    l_filter,
                    l_in,
                    channel,
                    learned: columns.iter().map(|c| c[channel]).collect(),
                    analytic: analytic.clone(),
                });
            }
        }
    }
    Ok(out)
}

/// Least-squares `α` in `learned ≈ α · analytic`.
pub fn fit_scale(learned: &[f64], analytic: &[f64]) -> f64 {
    let num: f64 = learned.iter().zip(analytic).map(|(l, a)| l * a).sum();
    let den: f64 = analytic.iter().map(|a| a * a).sum();
    num / den
}

/// Mean of `|learned − α·analytic| / |α·analytic|` with `α` from [`fit_scale`].
pub fn scaled_relative_error(learned: &[f64], analytic: &[f64]) -> (f64, f64) {
    let alpha = fit_scale(learned, analytic);
    let err = learned
        .iter()
        .zip(analytic)
        .map(|(l, a)| (l - alpha * a).abs() / (alpha * a).abs())
        .sum::<f64>()
        / learned.len().max(1) as f64;
    (alpha, err)
}

/// CSV with `r`, then per curve the learned value and, where an analytic
/// form exists, the scale-fitted analytic value and relative error.
pub fn write_radial_csv<W: Write>(mut w: W, config_hash: &str, radii: &[f64], curves: &[RadialCurve]) -> Result<()> {
    writeln!(w, "# config_hash={config_hash}")?;
    let mut header = vec!["r".to_string()];
    let mut fitted: Vec<Option<Vec<f64>>> = Vec::new();
    for c in curves {
        header.push(format!("learned_{}", c.label()));
        match &c.analytic {
            Some(a) => {
                header.push(format!("analytic_{}", c.label()));
                header.push(format!("relerr_{}", c.label()));
                let alpha = fit_scale(&c.learned, a);
                fitted.push(Some(a.iter().map(|v| alpha * v).collect()));
            }
            None => fitted.push(None),
        }
    }
    writeln!(w, "{}", header.join(","))?;
    for (i, r) in radii.iter().enumerate() {
        let mut row = vec![format!("{r:e}")];
        for (c, f) in curves.iter().zip(&fitted) {
            row.push(format!("{:e}", c.learned[i]));
            if let Some(f) = f {
                row.push(format!("{:e}", f[i]));
                row.push(format!("{:e}", (c.learned[i] - f[i]).abs() / f[i].abs()));
            }
        }
        writeln!(w, "{}", row.join(","))?;
    }
    Ok(())
}
