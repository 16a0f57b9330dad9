//! Command-line front end: every experiment as a subcommand with seeded,
//! reproducible CSV/JSON output.

use clap::{Parser, Subcommand, ValueEnum};
use std::path::PathBuf;
use std::process::ExitCode;

use gmaclab::capacity::{
    capacity_region, gaussian_region, at_snr_db, NoiseModel,
};
use gmaclab::error::GmacError;
use gmaclab::mimo::{
    ber_simulation, losslessness_residual, mac_sum_capacity, make_rod, make_sod,
    stbc_mutual_info, MacChannel, Scheme,
};
use gmaclab::psk::{
    dmin_formula_ee, dmin_formula_eo, exhaustive_partition_search, partition_sumset_dmin,
    ungerboeck_split,
};
use gmaclab::rotation::optimal_rotation;
use gmaclab::signal::{Constellation, ConstellationKind};
use gmaclab::trellis::{
    free_distance, label_ungerboeck, sum_trellis, Trellis, TrellisSpec,
};

const DEFAULT_SEED: u64 = 42;
const SEED_ENV: &str = "GMACLAB_SEED";

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Kind {
    Psk,
    Pam,
    Qam,
    Gaussian,
}

#[derive(Parser)]
#[command(name = "gmaclab", about = "Two-user GMAC / MIMO-MAC experiment runner")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args, Debug)]
struct Common {
    /// RNG seed; GMACLAB_SEED overrides the default when the flag is absent
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (defaults to all cores)
    #[arg(long)]
    workers: Option<usize>,
    /// Output file (stdout when omitted)
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Optimal inter-user rotation per SNR on a degree grid
    RotationTable {
        #[arg(long, value_enum, default_value = "psk")]
        constellation: Kind,
        #[arg(long)]
        m: usize,
        #[arg(long = "snr-db", value_delimiter = ',', required = true, allow_hyphen_values = true)]
        snr_db: Vec<f64>,
        #[arg(long = "theta-step-deg", default_value_t = 0.0625)]
        theta_step_deg: f64,
        #[command(flatten)]
        common: Common,
    },
    /// Constellation-constrained (or Gaussian) capacity region bounds
    CapacityRegion {
        #[arg(long, value_enum, default_value = "psk")]
        constellation: Kind,
        #[arg(long, default_value_t = 4)]
        m: usize,
        /// Rotation of user 2's alphabet, degrees
        #[arg(long = "theta-deg", default_value_t = 0.0)]
        theta_deg: f64,
        #[arg(long = "snr-db", value_delimiter = ',', required = true, allow_hyphen_values = true)]
        snr_db: Vec<f64>,
        #[arg(long, default_value_t = 100_000)]
        samples: usize,
        #[command(flatten)]
        common: Common,
    },
    /// Sum-alphabet partition minimum distances for M-PSK pairs
    PartitionReport {
        #[arg(long)]
        m: usize,
        #[arg(long = "theta-deg")]
        theta_deg: f64,
        /// Also run the exhaustive balanced-partition search
        #[arg(long, default_value_t = false)]
        search: bool,
        /// Prune 3-circularly-consecutive cells during the search
        #[arg(long, default_value_t = true)]
        prune: bool,
        #[command(flatten)]
        common: Common,
    },
    /// Free distances of the bundled trellis presets, or of a trellis file
    FreeDistance {
        /// Optional trellis description file; presets run when omitted
        #[arg(long = "trellis-file")]
        trellis_file: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "psk")]
        constellation: Kind,
        #[arg(long, default_value_t = 4)]
        m: usize,
        #[arg(long = "theta-deg", default_value_t = 45.0)]
        theta_deg: f64,
        #[command(flatten)]
        common: Common,
    },
    /// MIMO-MAC capacities, losslessness residuals, or BER curves
    Mimo {
        #[arg(long, value_enum)]
        task: MimoTask,
        #[arg(long, default_value_t = 2)]
        nt: usize,
        #[arg(long = "snr-db", value_delimiter = ',', default_value = "0,5,10,15", allow_hyphen_values = true)]
        snr_db: Vec<f64>,
        #[arg(long, default_value_t = 100_000)]
        samples: u64,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum MimoTask {
    Capacity,
    Ber,
    Losslessness,
}

struct Table {
    config: Vec<(String, String)>,
    columns: Vec<&'static str>,
    rows: Vec<Vec<String>>,
}

impl Table {
    fn render(&self, format: Format) -> String {
        match format {
            Format::Csv => {
                let mut s = String::new();
                for (k, v) in &self.config {
                    s.push_str(&format!("# {k}={v}\n"));
                }
                s.push_str(&self.columns.join(","));
                s.push('\n');
                for row in &self.rows {
                    s.push_str(&row.join(","));
                    s.push('\n');
                }
                s
            }
            Format::Json => {
                let config: serde_json::Map<String, serde_json::Value> = self
                    .config
                    .iter()
                    .map(|(k, v)| (k.clone(), serde_json::Value::String(v.clone())))
                    .collect();
                let body = serde_json::json!({
                    "config": config,
                    "columns": self.columns,
                    "rows": self.rows,
                });
                serde_json::to_string_pretty(&body).unwrap() + "\n"
            }
        }
    }
}

fn resolve_seed(common: &Common, config: &mut Vec<(String, String)>) -> u64 {
    let (seed, source) = match (common.seed, std::env::var(SEED_ENV)) {
        (Some(s), _) => (s, "flag"),
        (None, Ok(v)) => match v.parse::<u64>() {
            Ok(s) => (s, "env"),
            Err(_) => (DEFAULT_SEED, "default (env unparsable)"),
        },
        (None, Err(_)) => (DEFAULT_SEED, "default"),
    };
    config.push(("seed".into(), seed.to_string()));
    config.push(("seed_source".into(), source.into()));
    if source == "env" {
        eprintln!("seed {seed} taken from {SEED_ENV}");
    }
    seed
}

fn init_workers(common: &Common, config: &mut Vec<(String, String)>) {
    if let Some(w) = common.workers {
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(w)
            .build_global();
        config.push(("workers".into(), w.to_string()));
    }
}

fn emit(table: &Table, common: &Common) -> Result<(), GmacError> {
    let text = table.render(common.format);
    match &common.out {
        None => {
            print!("{text}");
            Ok(())
        }
        Some(path) => std::fs::write(path, text).map_err(|e| GmacError::Io {
            path: path.display().to_string(),
            source: e,
        }),
    }
}

fn base_constellation(kind: Kind, m: usize) -> Result<Constellation, GmacError> {
    let k = match kind {
        Kind::Psk => ConstellationKind::Psk,
        Kind::Pam => ConstellationKind::Pam,
        Kind::Qam => ConstellationKind::Qam,
        Kind::Gaussian => {
            return Err(GmacError::InvalidParameter(
                "gaussian has no point set".into(),
            ))
        }
    };
    Constellation::make(k, m, true)
}

fn fmt_f(v: f64) -> String {
    format!("{v}")
}

fn run(cli: Cli) -> Result<(), GmacError> {
    match cli.command {
        Command::RotationTable {
            constellation,
            m,
            snr_db,
            theta_step_deg,
            common,
        } => {
            if constellation == Kind::Psk && !m.is_power_of_two() {
                return Err(GmacError::InvalidParameter(format!(
                    "rotation table supports power-of-two M-PSK, got M = {m}"
                )));
            }
            let mut config = vec![
                ("command".into(), "rotation-table".into()),
                ("constellation".into(), format!("{constellation:?}").to_lowercase()),
                ("m".into(), m.to_string()),
                ("theta_step_deg".into(), fmt_f(theta_step_deg)),
                ("snr_db".into(), snr_db.iter().map(|v| fmt_f(*v)).collect::<Vec<_>>().join(";")),
            ];
            init_workers(&common, &mut config);
            let _ = resolve_seed(&common, &mut config);
            let c = base_constellation(constellation, m)?;
            let mut rows = Vec::new();
            for &snr in &snr_db {
                let profile = optimal_rotation(&c, snr, theta_step_deg)?;
                rows.push(vec![
                    fmt_f(snr),
                    fmt_f(profile.theta_star),
                    profile.multiplicity.to_string(),
                ]);
            }
            emit(
                &Table {
                    config,
                    columns: vec!["snr_db", "theta_star_deg", "multiplicity"],
                    rows,
                },
                &common,
            )
        }
        Command::CapacityRegion {
            constellation,
            m,
            theta_deg,
            snr_db,
            samples,
            common,
        } => {
            let mut config = vec![
                ("command".into(), "capacity-region".into()),
                ("constellation".into(), format!("{constellation:?}").to_lowercase()),
                ("m".into(), m.to_string()),
                ("theta_deg".into(), fmt_f(theta_deg)),
                ("samples".into(), samples.to_string()),
                ("snr_db".into(), snr_db.iter().map(|v| fmt_f(*v)).collect::<Vec<_>>().join(";")),
            ];
            init_workers(&common, &mut config);
            let seed = resolve_seed(&common, &mut config);
            let mut rows = Vec::new();
            if constellation == Kind::Gaussian {
                for &snr in &snr_db {
                    let rho = 10f64.powf(snr / 10.0);
                    let region = gaussian_region(rho)?;
                    rows.push(vec![
                        fmt_f(snr),
                        fmt_f(region.r1_max.value),
                        fmt_f(region.r2_max.value),
                        fmt_f(region.sum_max.value),
                        fmt_f(0.0),
                    ]);
                }
            } else {
                let base = base_constellation(constellation, m)?;
                let noise = NoiseModel::standard(seed);
                for &snr in &snr_db {
                    let c1 = at_snr_db(&base, snr, noise.sigma2);
                    let c2 = c1.rotated(theta_deg.to_radians());
                    let region = capacity_region(&c1, &c2, &noise, samples)?;
                    rows.push(vec![
                        fmt_f(snr),
                        fmt_f(region.r1_max.value),
                        fmt_f(region.r2_max.value),
                        fmt_f(region.sum_max.value),
                        fmt_f(region.sum_max.std_error),
                    ]);
                }
            }
            emit(
                &Table {
                    config,
                    columns: vec!["snr_db", "r1_max_bits", "r2_max_bits", "sum_max_bits", "sum_std_error"],
                    rows,
                },
                &common,
            )
        }
        Command::PartitionReport {
            m,
            theta_deg,
            search,
            prune,
            common,
        } => {
            let mut config = vec![
                ("command".into(), "partition-report".into()),
                ("m".into(), m.to_string()),
                ("theta_deg".into(), fmt_f(theta_deg)),
                ("search".into(), search.to_string()),
                ("prune".into(), prune.to_string()),
            ];
            init_workers(&common, &mut config);
            let _ = resolve_seed(&common, &mut config);
            let theta = theta_deg.to_radians();
            let c1 = base_constellation(Kind::Psk, m)?;
            let c2 = c1.rotated(theta);
            let split = ungerboeck_split(&c1)?;
            let report = partition_sumset_dmin(&split, &split, &c1, &c2);
            let [dee, deo, doe, doo] = report.d_linear();
            let mut rows = vec![
                vec!["dee_brute".into(), fmt_f(dee)],
                vec!["deo_brute".into(), fmt_f(deo)],
                vec!["doe_brute".into(), fmt_f(doe)],
                vec!["doo_brute".into(), fmt_f(doo)],
                vec!["dee_formula".into(), fmt_f(dmin_formula_ee(m, theta)?)],
                vec!["deo_formula".into(), fmt_f(dmin_formula_eo(m, theta)?)],
                vec!["ungerboeck_bottleneck".into(), fmt_f(report.bottleneck())],
            ];
            if search {
                let out = exhaustive_partition_search(m, theta, prune)?;
                rows.push(vec!["search_bottleneck".into(), fmt_f(out.best.bottleneck())]);
                let cell = |v: &[usize]| {
                    v.iter().map(|i| i.to_string()).collect::<Vec<_>>().join("|")
                };
                rows.push(vec!["search_part1_cell_a".into(), cell(&out.best_part1.set_a)]);
                rows.push(vec!["search_part2_cell_a".into(), cell(&out.best_part2.set_a)]);
                rows.push(vec![
                    "search_pairs_evaluated".into(),
                    out.pairs_evaluated.to_string(),
                ]);
            }
            emit(
                &Table {
                    config,
                    columns: vec!["quantity", "value"],
                    rows,
                },
                &common,
            )
        }
        Command::FreeDistance {
            trellis_file,
            constellation,
            m,
            theta_deg,
            common,
        } => {
            let mut config = vec![
                ("command".into(), "free-distance".into()),
                ("constellation".into(), format!("{constellation:?}").to_lowercase()),
                ("m".into(), m.to_string()),
                ("theta_deg".into(), fmt_f(theta_deg)),
            ];
            init_workers(&common, &mut config);
            let _ = resolve_seed(&common, &mut config);
            let mut rows = Vec::new();
            match trellis_file {
                Some(path) => {
                    let text = std::fs::read_to_string(&path).map_err(|e| GmacError::Io {
                        path: path.display().to_string(),
                        source: e,
                    })?;
                    let spec = TrellisSpec::parse(&text)?;
                    config.push(("trellis_file".into(), path.display().to_string()));
                    config.push((
                        "trellis_canonical".into(),
                        spec.canonical_text().replace('\n', ";"),
                    ));
                    let c = base_constellation(constellation, m)?;
                    let split = ungerboeck_split(&c)?;
                    let lt = spec.resolve(&c, &split)?;
                    let st = sum_trellis(&lt, &lt.rotated(theta_deg.to_radians()));
                    rows.push(vec![
                        "user_trellis".into(),
                        spec.n_states.to_string(),
                        fmt_f(free_distance(&lt)?),
                    ]);
                    rows.push(vec![
                        "sum_trellis".into(),
                        st.inner.trellis.n_states.to_string(),
                        fmt_f(free_distance(&st.inner)?),
                    ]);
                }
                None => {
                    let qpsk = base_constellation(Kind::Psk, 4)?;
                    let pam = base_constellation(Kind::Pam, 4)?;
                    let mut preset = |name: &str,
                                      t: &Trellis,
                                      c: &Constellation,
                                      theta: f64|
                     -> Result<f64, GmacError> {
                        let split = ungerboeck_split(c)?;
                        let lt = label_ungerboeck(t, c, &split)?;
                        let st = sum_trellis(&lt, &lt.rotated(theta));
                        let d = free_distance(&st.inner)?;
                        rows.push(vec![
                            name.into(),
                            (t.n_states * t.n_states).to_string(),
                            fmt_f(d),
                        ]);
                        Ok(d)
                    };
                    let pi = std::f64::consts::PI;
                    let d4q = preset("four_state_qpsk_theta45", &Trellis::four_state(), &qpsk, pi / 4.0)?;
                    let d4p = preset("four_state_pam4_theta90", &Trellis::four_state(), &pam, pi / 2.0)?;
                    let d2q = preset("two_state_qpsk_theta45", &Trellis::two_state(), &qpsk, pi / 4.0)?;
                    let d2p = preset("two_state_pam4_theta90", &Trellis::two_state(), &pam, pi / 2.0)?;
                    rows.push(vec![
                        "gain_four_state_db".into(),
                        "-".into(),
                        fmt_f(10.0 * (d4p / d4q).log10()),
                    ]);
                    rows.push(vec![
                        "gain_two_state_db".into(),
                        "-".into(),
                        fmt_f(10.0 * (d2p / d2q).log10()),
                    ]);
                }
            }
            emit(
                &Table {
                    config,
                    columns: vec!["item", "sum_trellis_states", "d2_free"],
                    rows,
                },
                &common,
            )
        }
        Command::Mimo {
            task,
            nt,
            snr_db,
            samples,
            common,
        } => {
            let mut config = vec![
                ("command".into(), "mimo".into()),
                ("task".into(), format!("{task:?}").to_lowercase()),
                ("nt".into(), nt.to_string()),
                ("samples".into(), samples.to_string()),
                ("snr_db".into(), snr_db.iter().map(|v| fmt_f(*v)).collect::<Vec<_>>().join(";")),
            ];
            init_workers(&common, &mut config);
            let seed = resolve_seed(&common, &mut config);
            match task {
                MimoTask::Capacity => {
                    let rod = make_rod(nt)?;
                    let sod = make_sod(&rod)?;
                    let mut rows = Vec::new();
                    for &snr in &snr_db {
                        let rho = 10f64.powf(snr / 10.0);
                        let cap = mac_sum_capacity(nt, rho, samples, seed)?;
                        let sod_mi = stbc_mutual_info(&sod, rho, samples, seed)?;
                        let rod_mi = stbc_mutual_info(&rod, rho, samples, seed)?;
                        rows.push(vec![
                            fmt_f(snr),
                            fmt_f(cap.value),
                            fmt_f(cap.std_error),
                            fmt_f(sod_mi.value),
                            fmt_f(sod_mi.std_error),
                            fmt_f(rod_mi.value),
                            fmt_f(rod_mi.std_error),
                        ]);
                    }
                    emit(
                        &Table {
                            config,
                            columns: vec![
                                "snr_db",
                                "mac_sum_capacity",
                                "cap_std_error",
                                "sod_mutual_info",
                                "sod_std_error",
                                "rod_mutual_info",
                                "rod_std_error",
                            ],
                            rows,
                        },
                        &common,
                    )
                }
                MimoTask::Losslessness => {
                    use rand::SeedableRng;
                    let rod = make_rod(nt)?;
                    let sod = make_sod(&rod)?;
                    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
                    let mut worst_rod: f64 = 0.0;
                    let mut worst_sod: f64 = 0.0;
                    for _ in 0..1000 {
                        let ch = MacChannel::draw(nt, 1.0, &mut rng);
                        worst_rod = worst_rod.max(losslessness_residual(&rod, &ch.h1, &ch.h2)?);
                        worst_sod = worst_sod.max(losslessness_residual(&sod, &ch.h1, &ch.h2)?);
                    }
                    emit(
                        &Table {
                            config,
                            columns: vec!["design", "channels", "max_residual"],
                            rows: vec![
                                vec!["rod".into(), "1000".into(), fmt_f(worst_rod)],
                                vec!["sod".into(), "1000".into(), fmt_f(worst_sod)],
                            ],
                        },
                        &common,
                    )
                }
                MimoTask::Ber => {
                    let mut rows = Vec::new();
                    for scheme in [Scheme::Rod, Scheme::Sod] {
                        let curve =
                            ber_simulation(scheme, nt, &snr_db, 100, 10_000_000, seed)?;
                        for p in &curve.points {
                            rows.push(vec![
                                format!("{scheme:?}").to_lowercase(),
                                fmt_f(p.snr_db),
                                fmt_f(p.ber),
                                p.bit_errors.to_string(),
                                p.bits.to_string(),
                            ]);
                        }
                    }
                    emit(
                        &Table {
                            config,
                            columns: vec!["scheme", "snr_db", "ber", "bit_errors", "bits"],
                            rows,
                        },
                        &common,
                    )
                }
            }
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                GmacError::Io { .. } => ExitCode::from(3),
                _ => ExitCode::from(2),
            }
        }
    }
}
