//! Experiment configuration documents (TOML).

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{read_grid_csv, read_pgm};
use crate::plan::PlanParams;
use crate::scene::{
    dual_band_source, gaussian_spectrum_truncated, hdr_patch_target_in, two_hole_target,
    DetectorModel, DrConvention, Hole, Region, Scene, SpectralCurve,
};

/// Gaussian band given by centre and FWHM, cut at `extent_fwhm` FWHMs from
/// the centre.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Band {
    pub center_nm: f64,
    pub fwhm_nm: f64,
    #[serde(default = "one")]
    pub extent_fwhm: f64,
}

fn one() -> f64 {
    1.0
}

impl Band {
    pub fn new(center_nm: f64, fwhm_nm: f64) -> Self {
        Band {
            center_nm,
            fwhm_nm,
            extent_fwhm: 1.0,
        }
    }

    pub fn curve(&self) -> Result<SpectralCurve> {
        gaussian_spectrum_truncated(self.center_nm, self.fwhm_nm, self.extent_fwhm)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HoleSpec {
    pub center: [f64; 2],
    pub radius: f64,
    pub filter: Band,
    #[serde(default = "one")]
    pub gain: f64,
}

/// Scene description.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum SceneSpec {
    Uniform {
        value: f64,
    },
    /// Raster-order irradiances.
    Irradiance {
        values: Vec<f64>,
    },
    /// 16-bit PGM or float CSV image with the grid's dimensions.
    File {
        path: String,
    },
    HdrPatches {
        levels_db: Vec<f64>,
        /// `[rows, columns]` of patch cells.
        layout: [usize; 2],
        margin: usize,
        /// `[m0, n0, width, height]`; the whole grid when absent.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        area: Option<[usize; 4]>,
    },
    DualBand {
        center: [f64; 2],
        radius: f64,
        sigma: f64,
    },
    TwoHole {
        holes: Vec<HoleSpec>,
        /// One source spectrum per carrier, in carrier order.
        sources: Vec<Band>,
    },
}

/// Scene plus measurement regions when the target defines them.
#[derive(Clone, Debug)]
pub struct BuiltScene {
    pub scene: Scene,
    pub patches: Option<(Vec<Region>, Region)>,
    pub levels_db: Option<Vec<f64>>,
}

impl SceneSpec {
    pub fn build(
        &self,
        columns: usize,
        rows: usize,
        responsivity: Option<&SpectralCurve>,
        convention: DrConvention,
        base_dir: Option<&Path>,
    ) -> Result<BuiltScene> {
        let plain = |scene| BuiltScene {
            scene,
            patches: None,
            levels_db: None,
        };
        Ok(match self {
            SceneSpec::Uniform { value } => plain(Scene::irradiance(
                columns,
                rows,
                vec![*value; columns * rows],
            )?),
            SceneSpec::Irradiance { values } => {
                plain(Scene::irradiance(columns, rows, values.clone())?)
            }
            SceneSpec::File { path } => {
                let p = match base_dir {
                    Some(d) => d.join(path),
                    None => path.into(),
                };
                let (c, r, v) = if p.extension().is_some_and(|e| e == "csv") {
                    read_grid_csv(&std::fs::read_to_string(&p)?)?
                } else {
                    read_pgm(std::fs::File::open(&p)?)?
                };
                if (c, r) != (columns, rows) {
                    return Err(Error::DimensionMismatch {
                        expected: format!("{columns}x{rows} image"),
                        found: format!("{c}x{r} in {}", p.display()),
                    });
                }
                plain(Scene::irradiance(c, r, v)?)
            }
            SceneSpec::HdrPatches {
                levels_db,
                layout,
                margin,
                area,
            } => {
                let area = area.map_or((0, 0, columns, rows), |a| (a[0], a[1], a[2], a[3]));
                let t = hdr_patch_target_in(
                    columns,
                    rows,
                    area,
                    levels_db,
                    (layout[0], layout[1]),
                    *margin,
                    convention,
                )?;
                BuiltScene {
                    scene: t.scene,
                    patches: Some((t.patches, t.background)),
                    levels_db: Some(t.levels_db),
                }
            }
            SceneSpec::DualBand {
                center,
                radius,
                sigma,
            } => plain(dual_band_source(
                columns,
                rows,
                (center[0], center[1]),
                *radius,
                *sigma,
            )?),
            SceneSpec::TwoHole { holes, sources } => {
                let holes = holes
                    .iter()
                    .map(|h| {
                        Ok(Hole {
                            center: (h.center[0], h.center[1]),
                            radius: h.radius,
                            filter: h.filter.curve()?,
                            gain: h.gain,
                        })
                    })
                    .collect::<Result<Vec<_>>>()?;
                let sources = sources
                    .iter()
                    .map(Band::curve)
                    .collect::<Result<Vec<_>>>()?;
                plain(two_hole_target(
                    columns,
                    rows,
                    &holes,
                    &sources,
                    responsivity,
                )?)
            }
        })
    }
}

/// Complete description of one simulated capture.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub plan: PlanParams,
    pub detector: DetectorModel,
    /// Second (complementary) detector; single-detector capture when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pd2_detector: Option<DetectorModel>,
    pub scene: SceneSpec,
    #[serde(default)]
    pub noise_seed: u64,
    #[serde(default)]
    pub convention: DrConvention,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<String>,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Format(e.to_string()))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Format(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
            .map_err(|e| Error::Format(format!("{}: {e}", path.display())))
    }

    pub fn build_scene(&self, base_dir: Option<&Path>) -> Result<BuiltScene> {
        let g = &self.plan.grid;
        self.scene.build(
            g.columns(),
            g.rows(),
            self.detector.responsivity.as_ref(),
            self.convention,
            base_dir,
        )
    }
}
