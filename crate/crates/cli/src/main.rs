use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use lagtrack::cell_to_cell::IntegratorMode;
use lagtrack::mesh::io::write_mesh;
use lagtrack::mesh::{
    build_annulus, build_box_hexa, build_box_tetra, build_cartesian_slab, build_perturbed_hexa_scaled, Mesh, MeshError,
};
use lagtrack::scenario::{run_scenario, ScenarioConfig, ScenarioError};
use lagtrack::verify::run_all;

const EXIT_CONFIG: u8 = 1;
const EXIT_LOST: u8 = 2;
const EXIT_VERIFY: u8 = 3;

#[derive(Parser)]
#[command(name = "lagtrack", version, about = "Stochastic particle transport on unstructured meshes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one validation scenario and write its CSV outputs.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        mode: Option<IntegratorMode>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Fail on the first lost particle instead of counting it.
        #[arg(long)]
        strict: bool,
    },
    /// Write a generated mesh in the text format.
    MeshGen {
        #[arg(long, value_enum)]
        kind: GenKind,
        /// Cells along x (slab), per side (boxes) or azimuthally (annulus).
        #[arg(long, default_value_t = 4)]
        n: usize,
        /// Radial cells of the annulus.
        #[arg(long, default_value_t = 21)]
        n_r: usize,
        /// Cell length of the slab, or box side.
        #[arg(long, default_value_t = 1.0)]
        size: f64,
        /// Transverse extent of the slab, or annulus depth.
        #[arg(long, default_value_t = 1.0)]
        extent: f64,
        #[arg(long, default_value_t = 1.0)]
        r_in: f64,
        #[arg(long, default_value_t = 2.0)]
        r_out: f64,
        /// Vertex displacement of the jittered box, as a fraction of the cell size.
        #[arg(long, default_value_t = 0.3)]
        jitter: f64,
        #[arg(long, default_value_t = 1)]
        mesh_seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the built-in invariant suites.
    Verify {
        #[arg(long, default_value_t = 20240601)]
        seed: u64,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum GenKind {
    Slab,
    Hexa,
    Tetra,
    Jittered,
    Annulus,
}

fn main() -> ExitCode {
    match Cli::parse().command {
        Command::Simulate { config, mode, seed, out, strict } => simulate(config, mode, seed, out, strict),
        Command::MeshGen { kind, n, n_r, size, extent, r_in, r_out, jitter, mesh_seed, out } => {
            let mesh = match kind {
                GenKind::Slab => build_cartesian_slab(n, size, extent),
                GenKind::Hexa => build_box_hexa(n, size),
                GenKind::Tetra => build_box_tetra(n, size),
                GenKind::Jittered => build_perturbed_hexa_scaled(n, size, jitter, mesh_seed),
                GenKind::Annulus => build_annulus(n, n_r, r_in, r_out, extent),
            };
            mesh_gen(mesh, &out)
        }
        Command::Verify { seed } => {
            let report = run_all(seed);
            print!("{report}");
            if report.all_passed() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(EXIT_VERIFY)
            }
        }
    }
}

fn simulate(
    config: PathBuf,
    mode: Option<IntegratorMode>,
    seed: Option<u64>,
    out: Option<PathBuf>,
    strict: bool,
) -> ExitCode {
    let mut cfg = match ScenarioConfig::from_file(&config) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    if let Some(m) = mode {
        cfg.mode = m;
    }
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if out.is_some() {
        cfg.output_dir = out;
    }
    if cfg.output_dir.is_none() {
        cfg.output_dir = Some(PathBuf::from("output"));
    }
    cfg.strict |= strict;

    match run_scenario(&cfg) {
        Ok(r) => {
            println!(
                "{:?} ({}): {} steps in {:.2?}, {} lost, {} wall stops",
                r.scenario,
                r.mode,
                r.steps.len(),
                r.wall_time,
                r.n_lost,
                r.n_wall_stops
            );
            for p in &r.outputs {
                println!("wrote {}", p.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                ScenarioError::Config(_) => EXIT_CONFIG,
                ScenarioError::Mesh(MeshError::InvalidParameter(_)) => EXIT_CONFIG,
                ScenarioError::Step(_) | ScenarioError::InvalidMesh(_) | ScenarioError::Mesh(_) => EXIT_LOST,
                _ => EXIT_CONFIG,
            })
        }
    }
}

fn mesh_gen(mesh: Result<Mesh, MeshError>, out: &PathBuf) -> ExitCode {
    let mesh = match mesh {
        Ok(m) => m,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    if let Err(e) = write_mesh(&mesh, out) {
        eprintln!("error: {e}");
        return ExitCode::from(EXIT_CONFIG);
    }
    println!("wrote {} ({} cells, {} faces)", out.display(), mesh.n_cells(), mesh.n_faces());
    ExitCode::SUCCESS
}
