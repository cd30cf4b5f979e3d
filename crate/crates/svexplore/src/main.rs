use std::net::{IpAddr, SocketAddr};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use svexplore::bundle::{precompute_bundle, write_tree, Bundle, PrecomputeParams};
use svexplore::io::{atomic_write, read_json, to_json_bytes, write_json, write_volume};
use svexplore::service::serve;
use svexplore_core::tree::brushed_supervoxels;
use svexplore_core::volume::{generate_spheres_phantom, Dtype, SpherePhantomSpec, VolumeMeta};
use svexplore_core::{FilterSpec, SearchQuery, SizeUnits, ThresholdRule};

#[derive(Parser)]
#[command(name = "svexplore", version, about = "Super-voxel clustering and meta-cluster exploration")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Units {
    Voxels,
    Nodes,
}

#[derive(Clone, Copy, ValueEnum)]
enum Rule {
    Max,
    Min,
}

#[derive(Subcommand)]
enum Command {
    /// Write a two-sphere phantom (or one from a JSON spec) as raw f32 plus sidecar.
    GenPhantom {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 24)]
        size: usize,
        #[arg(long, default_value_t = 0.0)]
        noise: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Phantom description JSON; overrides --size/--noise/--seed.
        #[arg(long)]
        spec: Option<PathBuf>,
        /// Also write the ground-truth labels (u8) here.
        #[arg(long)]
        ground_truth: Option<PathBuf>,
    },
    /// Run the offline pipeline and write a bundle directory.
    Precompute {
        /// Raw volume; its sidecar is the same path with a .json extension.
        volume: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 512)]
        supervoxel_size: usize,
        #[arg(long, default_value_t = 0.1)]
        compactness: f64,
        #[arg(long, default_value_t = 64)]
        bins: usize,
        #[arg(long, default_value_t = 0.3)]
        jaccard_threshold: f64,
        #[arg(long, default_value_t = 50.0)]
        initial_range: f64,
        #[arg(long, default_value_t = 1.5)]
        growth_factor: f64,
        #[arg(long, default_value_t = 12)]
        workers: usize,
        #[arg(long, default_value_t = 0.0)]
        smooth_sigma: f64,
        #[arg(long, value_enum, default_value_t = Units::Voxels)]
        size_units: Units,
        #[arg(long, value_enum, default_value_t = Rule::Max)]
        threshold_rule: Rule,
    },
    /// Serve the exploration API for a bundle.
    Serve {
        #[arg(long)]
        bundle: PathBuf,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: IpAddr,
    },
    /// Brushing search against a bundle; prints JSON.
    Query {
        #[arg(long)]
        bundle: PathBuf,
        /// Brushed voxel as x,y,z; repeatable.
        #[arg(long = "voxel", value_parser = parse_voxel, required = true)]
        voxels: Vec<[i64; 3]>,
        #[arg(long, default_value_t = 0)]
        min: u64,
        #[arg(long, default_value_t = u64::MAX)]
        max: u64,
        /// Print only the smallest containing node.
        #[arg(long)]
        containing: bool,
    },
    /// Write the (optionally filtered) tree as JSON.
    ExportTree {
        #[arg(long)]
        bundle: PathBuf,
        #[arg(long, default_value_t = 0)]
        min_size: u64,
        #[arg(long)]
        max_branch: Option<usize>,
        /// Defaults to stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn parse_voxel(s: &str) -> Result<[i64; 3], String> {
    let v: Vec<i64> = s
        .split(',')
        .map(|t| t.trim().parse::<i64>().map_err(|e| e.to_string()))
        .collect::<Result<_, _>>()?;
    <[i64; 3]>::try_from(v).map_err(|_| format!("expected x,y,z, got `{s}`"))
}

fn run(cli: Cli) -> svexplore::Result<()> {
    match cli.command {
        Command::GenPhantom {
            out,
            size,
            noise,
            seed,
            spec,
            ground_truth,
        } => {
            let spec = match spec {
                Some(p) => read_json(&p)?,
                None => SpherePhantomSpec::two_spheres(size, noise, seed),
            };
            let (vol, gt) = generate_spheres_phantom(&spec)?;
            write_volume(&out, &vol)?;
            if let Some(p) = ground_truth {
                atomic_write(&p, &gt)?;
                write_json(&p.with_extension("json"), &VolumeMeta::new(spec.dims, Dtype::U8))?;
            }
        }
        Command::Precompute {
            volume,
            out,
            supervoxel_size,
            compactness,
            bins,
            jaccard_threshold,
            initial_range,
            growth_factor,
            workers,
            smooth_sigma,
            size_units,
            threshold_rule,
        } => {
            let params = PrecomputeParams {
                supervoxel_size,
                compactness,
                bins,
                jaccard_threshold,
                initial_range,
                growth_factor,
                workers,
                smooth_sigma,
                size_units: match size_units {
                    Units::Voxels => SizeUnits::Voxels,
                    Units::Nodes => SizeUnits::Nodes,
                },
                threshold_rule: match threshold_rule {
                    Rule::Max => ThresholdRule::Max,
                    Rule::Min => ThresholdRule::Min,
                },
                ..PrecomputeParams::default()
            };
            let manifest = precompute_bundle(&volume, &out, &params)?;
            for t in &manifest.stage_timings {
                eprintln!("{:>14}  {:.3}s", t.stage, t.seconds);
            }
            println!("{}", String::from_utf8_lossy(&to_json_bytes(&manifest.counts)).trim_end());
        }
        Command::Serve { bundle, port, host } => {
            let rt = tokio::runtime::Runtime::new().map_err(|source| svexplore::Error::Io {
                path: bundle.clone(),
                source,
            })?;
            let addr = SocketAddr::new(host, port);
            eprintln!("serving {} on http://{addr}", bundle.display());
            rt.block_on(serve(&bundle, addr))?;
        }
        Command::Query {
            bundle,
            voxels,
            min,
            max,
            containing,
        } => {
            let b = Bundle::load(&bundle)?;
            let value = if containing {
                let inst = b.tree.containing_node(&b.labeling, &voxels)?;
                serde_json::json!({ "instance_id": inst, "metacluster_id": b.tree.nodes[inst as usize].metacluster_id })
            } else {
                let svs = brushed_supervoxels(&b.labeling, &voxels)?;
                let q = SearchQuery {
                    brushed_voxels: voxels,
                    min_size: min,
                    max_size: max,
                };
                serde_json::json!({ "supervoxels": svs, "hits": b.tree.search_nodes(&b.labeling, &q)? })
            };
            println!("{}", String::from_utf8_lossy(&to_json_bytes(&value)).trim_end());
        }
        Command::ExportTree {
            bundle,
            min_size,
            max_branch,
            out,
        } => {
            let b = Bundle::load(&bundle)?;
            let view = b.tree.filter_tree(&FilterSpec {
                min_voxel_size: min_size,
                max_branching: max_branch,
            });
            let nodes: Vec<serde_json::Value> = view
                .instances()
                .into_iter()
                .map(|i| {
                    let n = &b.tree.nodes[i as usize];
                    serde_json::json!({
                        "instance_id": n.instance_id,
                        "metacluster_id": n.metacluster_id,
                        "parent_instance": n.parent_instance,
                        "children": view.children(i).collect::<Vec<_>>(),
                        "footprint_voxel_size": n.footprint_voxel_size,
                        "is_duplicate": n.is_duplicate,
                        "canonical_instance": n.canonical_instance,
                    })
                })
                .collect();
            let value = serde_json::json!({ "nodes": nodes });
            match out {
                Some(p) if min_size == 0 && max_branch.is_none() => write_tree(&p, &b.tree)?,
                Some(p) => write_json(&p, &value)?,
                None => println!("{}", String::from_utf8_lossy(&to_json_bytes(&value)).trim_end()),
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
