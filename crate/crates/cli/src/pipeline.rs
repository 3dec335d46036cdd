//! Stage orchestration. Each stage reads its inputs from the output
//! directory, writes into its own subdirectory, and records a key derived
//! from the settings it depends on so unchanged stages are skipped.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use qdiff_core::biphoton::{amplitude, schmidt_number_gaussian, KernelModel};
use qdiff_core::imaging::{
    complex_image, image_metrics, phase_map, reweight, RealImage, WeightScheme,
};
use qdiff_core::io::{
    load_decomposition, read_coupling_csv, save_decomposition, write_coupling_csv,
    write_heatmap_pgm, write_image_pgm, write_magnitude_pgm, write_matrix_csv, write_real_image,
    write_spectrum_csv,
};
use qdiff_core::matter::{
    beta_matrix_schmidt, idler_density_first_order, idler_density_initial, load_charge_density,
    trace_second_index, ChargeDensity, CouplingKind, CouplingMatrix, CouplingOrder,
};
use qdiff_core::spectral::{gamma_matrix, spectral_gate_functional, Gate, GateSpec, GammaQuadrature};
use qdiff_core::{
    entanglement_metrics, frequency_resolved_image, gaussian_schmidt_analytic, schmidt_decompose,
    SchmidtDecomposition, Space,
};

use crate::config::{Method, RunConfig};
use crate::error::CliError;
use crate::manifest::{hash_file, sha256_hex, write_manifest, ManifestEntry};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Decompose,
    Couple,
    Image,
    Farfield,
    Specresolve,
}

impl Stage {
    pub const ALL: [Stage; 5] = [
        Stage::Decompose,
        Stage::Couple,
        Stage::Image,
        Stage::Farfield,
        Stage::Specresolve,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Decompose => "decompose",
            Stage::Couple => "couple",
            Stage::Image => "image",
            Stage::Farfield => "farfield",
            Stage::Specresolve => "specresolve",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Stage {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Stage::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| {
                CliError::Config(format!(
                    "unknown stage '{s}'; expected one of decompose, couple, image, farfield, specresolve"
                ))
            })
    }
}

const KEY_FILE: &str = "stage.key";

/// What a stage did.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StageReport {
    pub stage: Stage,
    pub cached: bool,
    pub summary: String,
}

/// Runs stages against one output directory.
pub struct Pipeline<'a> {
    cfg: &'a RunConfig,
    out: PathBuf,
}

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

impl<'a> Pipeline<'a> {
    pub fn new(cfg: &'a RunConfig, out: impl Into<PathBuf>) -> Self {
        Self {
            cfg,
            out: out.into(),
        }
    }

    pub fn out(&self) -> &Path {
        &self.out
    }

    fn dir(&self, stage: Stage) -> PathBuf {
        self.out.join(stage.name())
    }

    fn decomposition_dir(&self) -> PathBuf {
        self.dir(Stage::Decompose).join("decomposition")
    }

    fn matter_hashes(&self) -> Result<String, CliError> {
        let mut s = format!("magnitude-sha256 = {}\n", hash_file(&self.cfg.magnitude)?);
        if let Some(p) = &self.cfg.phase {
            s.push_str(&format!("phase-sha256 = {}\n", hash_file(p)?));
        }
        Ok(s)
    }

    /// Cache key of a stage: a hash over the settings that determine its output.
    pub fn stage_key(&self, stage: Stage) -> Result<String, CliError> {
        let c = self.cfg;
        let text = match stage {
            Stage::Decompose => ["pump", "grid", "schmidt", "basis", "tolerances", "output"]
                .iter()
                .map(|s| c.section(s))
                .collect::<String>()
                + &format!("imaging.regime_sign = {}\n", c.regime_sign),
            Stage::Couple => format!(
                "{}{}{}couple.modes = {}\nimaging.orders = {:?}\n",
                self.stage_key(Stage::Decompose)?,
                c.section("matter"),
                self.matter_hashes()?,
                self.coupled_modes(),
                c.orders.iter().map(|o| o.index()).collect::<Vec<_>>()
            ),
            Stage::Image => format!("{}{}", self.stage_key(Stage::Couple)?, c.section("imaging")),
            Stage::Farfield => format!(
                "{}{}{}",
                self.stage_key(Stage::Couple)?,
                c.section("gates"),
                c.section("farfield")
            ),
            Stage::Specresolve => format!(
                "{}{}{}{}",
                c.section("grid"),
                c.section("matter"),
                self.matter_hashes()?,
                c.section("specresolve")
            ),
        };
        Ok(sha256_hex(format!("{}\n{text}", stage.name()).as_bytes()))
    }

    /// Number of modes carried through the coupling stage.
    fn coupled_modes(&self) -> usize {
        let max_n = *self.cfg.truncations.iter().max().expect("validated non-empty");
        let far = if self.cfg.farfield { self.cfg.farfield_truncation } else { 0 };
        max_n.max(far).min(self.cfg.rank)
    }

    fn is_current(&self, stage: Stage) -> Result<bool, CliError> {
        let path = self.dir(stage).join(KEY_FILE);
        match std::fs::read_to_string(&path) {
            Ok(k) => Ok(k.trim() == self.stage_key(stage)?),
            Err(_) => Ok(false),
        }
    }

    /// Clears a stage directory before it is rewritten so no stale files survive.
    fn fresh_dir(&self, stage: Stage) -> Result<PathBuf, CliError> {
        let dir = self.dir(stage);
        if dir.exists() {
            std::fs::remove_dir_all(&dir).map_err(|e| io_err(&dir, e))?;
        }
        std::fs::create_dir_all(&dir).map_err(|e| io_err(&dir, e))?;
        Ok(dir)
    }

    fn seal(&self, stage: Stage) -> Result<(), CliError> {
        let path = self.dir(stage).join(KEY_FILE);
        std::fs::write(&path, format!("{}\n", self.stage_key(stage)?)).map_err(|e| io_err(&path, e))
    }

    fn write_log(&self) -> Result<(), CliError> {
        std::fs::create_dir_all(&self.out).map_err(|e| io_err(&self.out, e))?;
        let path = self.out.join("config.resolved.toml");
        std::fs::write(&path, self.cfg.resolved()).map_err(|e| io_err(&path, e))
    }

    /// Every enabled stage in order, then the manifest.
    pub fn run_all(&self) -> Result<(Vec<StageReport>, Vec<ManifestEntry>), CliError> {
        let mut reports = Vec::new();
        for stage in Stage::ALL {
            if (stage == Stage::Farfield && !self.cfg.farfield)
                || (stage == Stage::Specresolve && !self.cfg.specresolve)
            {
                continue;
            }
            reports.extend(self.execute(stage)?);
        }
        let manifest = self.finish()?;
        Ok((reports, manifest))
    }

    /// One stage (plus the coupling stage when imaging needs it), then the manifest.
    pub fn run_stage(&self, stage: Stage) -> Result<(Vec<StageReport>, Vec<ManifestEntry>), CliError> {
        let mut reports = Vec::new();
        if matches!(stage, Stage::Couple | Stage::Image | Stage::Farfield) && !self.is_current(Stage::Decompose)? {
            return Err(CliError::MissingArtifact(format!(
                "`{stage}` needs an up-to-date decomposition in {}; run `qdiff decompose` with the same config first",
                self.decomposition_dir().display()
            )));
        }
        if matches!(stage, Stage::Image | Stage::Farfield) && !self.is_current(Stage::Couple)? {
            reports.extend(self.execute(Stage::Couple)?);
        }
        reports.extend(self.execute(stage)?);
        let manifest = self.finish()?;
        Ok((reports, manifest))
    }

    fn finish(&self) -> Result<Vec<ManifestEntry>, CliError> {
        self.write_log()?;
        write_manifest(&self.out)
    }

    fn execute(&self, stage: Stage) -> Result<Vec<StageReport>, CliError> {
        self.write_log()?;
        if self.is_current(stage)? {
            return Ok(vec![StageReport {
                stage,
                cached: true,
                summary: "up to date".into(),
            }]);
        }
        let summary = match stage {
            Stage::Decompose => self.decompose()?,
            Stage::Couple => self.couple()?,
            Stage::Image => self.image()?,
            Stage::Farfield => self.farfield()?,
            Stage::Specresolve => self.specresolve()?,
        };
        self.seal(stage)?;
        Ok(vec![StageReport {
            stage,
            cached: false,
            summary,
        }])
    }

    fn load_decomposition(&self, needed_by: Stage) -> Result<SchmidtDecomposition, CliError> {
        let dir = self.decomposition_dir();
        if !self.is_current(Stage::Decompose)? {
            return Err(CliError::MissingArtifact(format!(
                "stage {needed_by} needs an up-to-date decomposition in {}; run `qdiff decompose` with the same config first",
                dir.display()
            )));
        }
        load_decomposition(&dir).map_err(CliError::stage(needed_by.name()))
    }

    fn load_sigma(&self, stage: Stage) -> Result<ChargeDensity, CliError> {
        load_charge_density(&self.cfg.magnitude, self.cfg.phase.as_deref(), &self.cfg.grid)
            .map_err(CliError::stage(stage.name()))
    }

    fn load_coupling(&self, stage: Stage, name: &str) -> Result<CouplingMatrix, CliError> {
        let path = self.dir(Stage::Couple).join(name);
        if !self.is_current(Stage::Couple)? || !path.is_file() {
            return Err(CliError::MissingArtifact(format!(
                "stage {stage} needs {}; run `qdiff couple` with the same config first",
                path.display()
            )));
        }
        read_coupling_csv(&path).map_err(CliError::stage(stage.name()))
    }

    fn decompose(&self) -> Result<String, CliError> {
        let c = self.cfg;
        let err = CliError::stage("decompose");
        let dir = self.fresh_dir(Stage::Decompose)?;
        let dec = match c.method {
            Method::Svd => {
                let amp = amplitude(&c.pump, &c.grid).map_err(&err)?;
                schmidt_decompose(&amp, c.rank).map_err(&err)?
            }
            Method::Analytic => {
                let full = gaussian_schmidt_analytic(&c.pump, c.family, c.max_order, &c.grid).map_err(&err)?;
                full.truncated(c.rank).map_err(&err)?
            }
        };
        let dec = dec.with_regime_sign(c.regime_sign).map_err(&err)?;

        let total: f64 = dec.weights().iter().sum();
        if (total - 1.0).abs() > c.weight_sum_tolerance {
            return Err(err(qdiff_core::Error::Unnormalized(total)));
        }
        if dec.tail_mass() > c.max_tail_mass {
            return Err(err(qdiff_core::Error::Numerical(format!(
                "rank {} discards weight {:.4} > tolerances.max_tail_mass {}; increase schmidt.rank",
                dec.rank(),
                dec.tail_mass(),
                c.max_tail_mass
            ))));
        }
        let modes = dec.signal_modes(Space::Real).map_err(&err)?;
        if modes.gram_deviation() > c.gram_tolerance {
            return Err(err(qdiff_core::Error::Numerical(format!(
                "signal modes deviate from orthonormality by {:e} > tolerances.gram {:e}",
                modes.gram_deviation(),
                c.gram_tolerance
            ))));
        }

        save_decomposition(&self.decomposition_dir(), &dec).map_err(&err)?;
        write_spectrum_csv(&dir.join("spectrum.csv"), dec.weights()).map_err(&err)?;
        let metrics = entanglement_metrics(dec.weights()).map_err(&err)?;
        let mut summary = format!(
            "participation_ratio = {}\nentropy_bits = {}\ntail_mass = {}\nrank = {}\nregime_sign = {}\nfundamental_waist = {}\n",
            metrics.schmidt_number_kappa,
            metrics.entropy_bits,
            dec.tail_mass(),
            dec.rank(),
            dec.regime_sign(),
            dec.fundamental_waist().map_err(&err)?
        );
        if c.pump.model == KernelModel::DoubleGaussian {
            summary.push_str(&format!(
                "schmidt_number_closed_form = {}\n",
                schmidt_number_gaussian(c.pump.sigma_p, c.pump.crystal_l).map_err(&err)?
            ));
        }
        let path = dir.join("summary.txt");
        std::fs::write(&path, &summary).map_err(|e| io_err(&path, e))?;

        let gallery = dir.join("gallery");
        std::fs::create_dir_all(&gallery).map_err(|e| io_err(&gallery, e))?;
        for n in 0..c.gallery.min(dec.rank()) {
            let u = dec.signal_mode(n, Space::Real).map_err(&err)?;
            let v = dec.idler_mode(n, Space::Real).map_err(&err)?;
            write_magnitude_pgm(&gallery.join(format!("signal_{n:02}.pgm")), &u).map_err(&err)?;
            write_magnitude_pgm(&gallery.join(format!("idler_{n:02}.pgm")), &v).map_err(&err)?;
        }
        Ok(format!(
            "rank {} participation ratio {:.4} tail mass {:.3e}",
            dec.rank(),
            metrics.schmidt_number_kappa,
            dec.tail_mass()
        ))
    }

    fn couple(&self) -> Result<String, CliError> {
        let dec = self.load_decomposition(Stage::Couple)?;
        let err = CliError::stage("couple");
        let sigma = self.load_sigma(Stage::Couple)?;
        let dir = self.fresh_dir(Stage::Couple)?;
        let dec = dec.truncated(self.coupled_modes()).map_err(&err)?;

        let beta1 = beta_matrix_schmidt(&sigma, &dec, CouplingOrder::First).map_err(&err)?;
        let mut written = vec![];
        for order in [CouplingOrder::First, CouplingOrder::Second] {
            if order != CouplingOrder::First && !self.cfg.orders.contains(&order) {
                continue;
            }
            let beta = if order == CouplingOrder::First {
                beta1.clone()
            } else {
                beta_matrix_schmidt(&sigma, &dec, order).map_err(&err)?
            };
            let name = format!("beta{}", order.index());
            write_coupling_csv(&dir.join(format!("{name}.csv")), &beta).map_err(&err)?;
            write_heatmap_pgm(&dir.join(format!("{name}.pgm")), beta.entries()).map_err(&err)?;
            written.push(name);
        }

        let rho0 = idler_density_initial(&dec).map_err(&err)?;
        write_matrix_csv(&dir.join("density_initial.csv"), rho0.entries(), rho0.basis(), "density0")
            .map_err(&err)?;
        write_heatmap_pgm(&dir.join("density_initial.pgm"), rho0.entries()).map_err(&err)?;
        let rho1 = idler_density_first_order(&dec, &beta1).map_err(&err)?;
        write_matrix_csv(
            &dir.join("density_first_order.csv"),
            rho1.entries(),
            rho1.basis(),
            "density1",
        )
        .map_err(&err)?;
        write_heatmap_pgm(&dir.join("density_first_order.pgm"), rho1.entries()).map_err(&err)?;
        if let Some(indices) = dec.axis_indices() {
            let traced = trace_second_index(rho1.entries(), &indices).map_err(&err)?;
            write_heatmap_pgm(&dir.join("density_first_order_traced.pgm"), &traced).map_err(&err)?;
        }
        Ok(format!("{} over {} modes", written.join(", "), dec.rank()))
    }

    fn ideal_image(sigma: &ChargeDensity, order: CouplingOrder) -> Result<RealImage, qdiff_core::Error> {
        let field = sigma.field();
        let values = field
            .values()
            .iter()
            .map(|z| match order {
                CouplingOrder::First => z.re,
                CouplingOrder::Second => z.norm_sqr(),
            })
            .collect();
        RealImage::new(*field.grid(), values)
    }

    fn image(&self) -> Result<String, CliError> {
        let dec = self.load_decomposition(Stage::Image)?;
        let err = CliError::stage("image");
        let couplings = self
            .cfg
            .orders
            .iter()
            .map(|o| Ok((*o, self.load_coupling(Stage::Image, &format!("beta{}.csv", o.index()))?)))
            .collect::<Result<Vec<_>, CliError>>()?;
        let sigma = self.load_sigma(Stage::Image)?;
        let dir = self.fresh_dir(Stage::Image)?;
        let mut rows = String::from("order,truncation,scheme,nmse,pearson\n");
        let mut count = 0;
        for (order, beta) in &couplings {
            let p = order.index();
            let ideal = Self::ideal_image(&sigma, *order).map_err(&err)?;
            write_real_image(&dir.join(format!("ideal_p{p}.bin")), &ideal).map_err(&err)?;
            write_image_pgm(&dir.join(format!("ideal_p{p}.pgm")), &ideal).map_err(&err)?;
            for &n in &self.cfg.truncations {
                for &scheme in &self.cfg.schemes {
                    let w = reweight(&dec, scheme, n).map_err(&err)?;
                    let z = complex_image(&dec, beta, &w, n).map_err(&err)?;
                    let img = RealImage::real_part(&z).map_err(&err)?;
                    let stem = format!("image_p{p}_N{n}_{}", scheme.name());
                    write_real_image(&dir.join(format!("{stem}.bin")), &img).map_err(&err)?;
                    write_image_pgm(&dir.join(format!("{stem}.pgm")), &img).map_err(&err)?;
                    if self.cfg.phase_maps && *order == CouplingOrder::First {
                        let phase = RealImage::new(*dec.grid(), phase_map(&z)).map_err(&err)?;
                        let stem = format!("phase_p{p}_N{n}_{}", scheme.name());
                        write_real_image(&dir.join(format!("{stem}.bin")), &phase).map_err(&err)?;
                        write_image_pgm(&dir.join(format!("{stem}.pgm")), &phase).map_err(&err)?;
                    }
                    let m = image_metrics(&img, &ideal).map_err(&err)?;
                    rows.push_str(&format!("{p},{n},{},{},{}\n", scheme.name(), m.nmse, m.pearson));
                    count += 1;
                }
            }
        }
        let path = dir.join("metrics.csv");
        std::fs::write(&path, rows).map_err(|e| io_err(&path, e))?;
        Ok(format!("{count} images"))
    }

    fn gates(&self) -> Result<GateSpec, qdiff_core::Error> {
        let g = &self.cfg.gates;
        GateSpec::new(
            Gate::new(g.signal_center, g.signal_fwhm)?,
            Gate::new(g.idler_center, g.idler_fwhm)?,
            Some(g.pump_center),
            g.pump_fwhm,
        )
    }

    fn farfield(&self) -> Result<String, CliError> {
        let dec = self.load_decomposition(Stage::Farfield)?;
        let err = CliError::stage("farfield");
        let beta1 = self.load_coupling(Stage::Farfield, "beta1.csv")?;
        let dir = self.fresh_dir(Stage::Farfield)?;
        let n = self.cfg.farfield_truncation;
        if beta1.dim() < n {
            return Err(CliError::MissingArtifact(format!(
                "beta1 covers {} modes but farfield.truncation is {n}; rerun `qdiff couple`",
                beta1.dim()
            )));
        }
        let beta1 = CouplingMatrix::new(
            beta1.entries().view((0, 0), (n, n)).into_owned(),
            beta1.basis().clone(),
            CouplingKind::Beta1,
        )
        .map_err(&err)?;
        let gates = self.gates().map_err(&err)?;
        let mut quad = GammaQuadrature::for_gates(&gates, dec.grid(), self.cfg.farfield_refinement).map_err(&err)?;
        quad.speed_of_light = self.cfg.speed_of_light;
        let spectrum = spectral_gate_functional(&gates, &quad.omega).map_err(&err)?;
        let mut csv = String::from("omega,e\n");
        for (w, e) in quad.omega.iter().zip(&spectrum) {
            csv.push_str(&format!("{w},{e}\n"));
        }
        let path = dir.join("gate_spectrum.csv");
        std::fs::write(&path, csv).map_err(|e| io_err(&path, e))?;

        let gamma = gamma_matrix(&dec, &beta1, &gates, &quad).map_err(&err)?;
        write_coupling_csv(&dir.join("gamma.csv"), &gamma).map_err(&err)?;
        write_heatmap_pgm(&dir.join("gamma.pgm"), gamma.entries()).map_err(&err)?;
        let w = reweight(&dec, WeightScheme::Natural, n).map_err(&err)?;
        let img = RealImage::real_part(&complex_image(&dec, &gamma, &w, n).map_err(&err)?).map_err(&err)?;
        write_real_image(&dir.join(format!("farfield_N{n}.bin")), &img).map_err(&err)?;
        write_image_pgm(&dir.join(format!("farfield_N{n}.pgm")), &img).map_err(&err)?;
        Ok(format!("gamma over {n} modes, {} frequency samples", quad.omega.len()))
    }

    fn specresolve(&self) -> Result<String, CliError> {
        let err = CliError::stage("specresolve");
        let sigma = self.load_sigma(Stage::Specresolve)?;
        let dir = self.fresh_dir(Stage::Specresolve)?;
        let img = frequency_resolved_image(&sigma, self.cfg.omega_bar, self.cfg.speed_of_light, self.cfg.projection)
            .map_err(&err)?;
        write_real_image(&dir.join("specresolve.bin"), &img).map_err(&err)?;
        write_image_pgm(&dir.join("specresolve.pgm"), &img).map_err(&err)?;
        Ok(format!("omega_bar = {}", self.cfg.omega_bar))
    }
}
