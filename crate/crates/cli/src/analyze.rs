use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use htcopt::analysis::{combined_optimum, dbscan, lasso_fit, min_max_scale, pareto_indices, scale_features};
use htcopt::genome::{encode, GenomeSpec, RlParameterSet};
use serde::{Deserialize, Serialize};

use crate::config::write_atomic;
use crate::optimize::{GENOMES_FILE, RESULTS_HEADER};
use crate::Invalid;

#[derive(Debug, clap::Args)]
pub struct Args {
    /// results.csv from an optimize run.
    #[arg(long)]
    results: PathBuf,
    /// Genome log of the same run (default: genomes.jsonl next to the results).
    #[arg(long)]
    genomes: Option<PathBuf>,
    /// Output directory (default: the results directory).
    #[arg(long)]
    out: Option<PathBuf>,
    /// DBSCAN radius in scaled (0..100) objective units.
    #[arg(long, default_value_t = 5.0)]
    eps: f64,
    #[arg(long, default_value_t = 4)]
    min_pts: usize,
    /// Weights of scaled energy and overhead for the combined optimum.
    #[arg(long, default_value = "1,1", value_delimiter = ',', num_args = 1..)]
    weights: Vec<f64>,
    /// Lasso penalty on features and targets scaled to [1, 100].
    #[arg(long, default_value_t = 1.0)]
    lambda: f64,
}

#[derive(Debug, Clone, Deserialize)]
struct ResultRow {
    generation: usize,
    individual: usize,
    energy_wh: f64,
    overhead_s: f64,
}

#[derive(Deserialize)]
struct GenomeLine {
    generation: usize,
    individual: usize,
    parameters: RlParameterSet,
}

#[derive(Debug, Clone, Serialize)]
struct Point {
    id: usize,
    generation: usize,
    individual: usize,
    objectives: [f64; 2],
    parameters: RlParameterSet,
}

fn read_results(path: &Path) -> anyhow::Result<Vec<ResultRow>> {
    let mut r = csv::Reader::from_path(path)
        .map_err(|e| Invalid(format!("cannot read results {}: {e}", path.display())))?;
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if header.join(",") != RESULTS_HEADER {
        return Err(Invalid(format!("{}: unexpected header {}", path.display(), header.join(","))).into());
    }
    let mut rows = Vec::new();
    for (i, rec) in r.deserialize().enumerate() {
        let row: ResultRow =
            rec.map_err(|e| Invalid(format!("{} row {}: {e}", path.display(), i + 1)))?;
        rows.push(row);
    }
    Ok(rows)
}

fn read_genomes(path: &Path) -> anyhow::Result<HashMap<(usize, usize), RlParameterSet>> {
    let text = fs::read_to_string(path)
        .map_err(|e| Invalid(format!("cannot read genomes {}: {e}", path.display())))?;
    let mut out = HashMap::new();
    for (i, line) in text.lines().enumerate() {
        let g: GenomeLine = serde_json::from_str(line)
            .map_err(|e| Invalid(format!("{} line {}: {e}", path.display(), i + 1)))?;
        out.insert((g.generation, g.individual), g.parameters);
    }
    Ok(out)
}

pub fn run(args: Args) -> anyhow::Result<()> {
    if args.weights.len() != 2 || args.weights.iter().any(|w| !w.is_finite()) {
        return Err(Invalid("--weights takes two finite numbers, e.g. 1,1".into()).into());
    }
    let rows = read_results(&args.results)?;
    if rows.is_empty() {
        return Err(Invalid(format!("{}: no results", args.results.display())).into());
    }
    let base = args.results.parent().unwrap_or(Path::new(".")).to_path_buf();
    let genomes_path = args.genomes.clone().unwrap_or_else(|| base.join(GENOMES_FILE));
    let genomes = read_genomes(&genomes_path)?;
    let out = args.out.clone().unwrap_or(base);
    fs::create_dir_all(&out)?;

    // Elitism repeats survivors across generations; keep first appearances.
    let mut points: Vec<Point> = Vec::new();
    for r in &rows {
        let parameters = genomes
            .get(&(r.generation, r.individual))
            .cloned()
            .ok_or_else(|| {
                Invalid(format!(
                    "{}: no genome for generation {} individual {}",
                    genomes_path.display(),
                    r.generation,
                    r.individual
                ))
            })?;
        let objectives = [r.energy_wh, r.overhead_s];
        if points
            .iter()
            .any(|p| p.objectives == objectives && p.parameters == parameters)
        {
            continue;
        }
        points.push(Point {
            id: points.len(),
            generation: r.generation,
            individual: r.individual,
            objectives,
            parameters,
        });
    }

    let objs: Vec<Vec<f64>> = points.iter().map(|p| p.objectives.to_vec()).collect();
    let front: Vec<Point> = pareto_indices(&objs)
        .into_iter()
        .enumerate()
        .map(|(k, i)| Point {
            id: k,
            ..points[i].clone()
        })
        .collect();
    let front_objs: Vec<Vec<f64>> = front.iter().map(|p| p.objectives.to_vec()).collect();

    write_atomic(&out.join("pareto.json"), (serde_json::to_string_pretty(&front)? + "\n").as_bytes())?;

    let mut csv = String::from("energy_wh,overhead_s,generation\n");
    for p in &front {
        writeln!(csv, "{},{},{}", p.objectives[0], p.objectives[1], p.generation)?;
    }
    write_atomic(&out.join("front.csv"), csv.as_bytes())?;

    // Cluster the front in scaled objective space.
    let scaled_cols: Vec<Vec<f64>> = (0..2)
        .map(|j| min_max_scale(&front_objs.iter().map(|o| o[j]).collect::<Vec<_>>(), 0.0, 100.0))
        .collect();
    let scaled: Vec<Vec<f64>> = (0..front.len())
        .map(|i| vec![scaled_cols[0][i], scaled_cols[1][i]])
        .collect();
    let labels = dbscan(&scaled, args.eps, args.min_pts).map_err(|e| Invalid(e.to_string()))?;
    let mut csv = String::from("point_id,label\n");
    for (i, l) in labels.iter().enumerate() {
        writeln!(csv, "{},{}", i, l.map_or(-1, |c| c as i64))?;
    }
    write_atomic(&out.join("clusters.csv"), csv.as_bytes())?;

    // One Lasso per objective over every distinct evaluated point.
    let spec = GenomeSpec::rl_default();
    let features = scale_features(&points.iter().map(|p| encode(&p.parameters)).collect::<Vec<_>>());
    let mut csv = String::from("objective,feature,coefficient\n");
    for (j, name) in ["energy_wh", "overhead_s"].iter().enumerate() {
        let target = min_max_scale(&objs.iter().map(|o| o[j]).collect::<Vec<_>>(), 1.0, 100.0);
        let model = lasso_fit(&features, &target, args.lambda).map_err(|e| Invalid(e.to_string()))?;
        for (g, c) in spec.genes.iter().zip(&model.coefficients) {
            writeln!(csv, "{name},{},{c}", g.name)?;
        }
        writeln!(csv, "{name},intercept,{}", model.intercept)?;
    }
    write_atomic(&out.join("lasso.csv"), csv.as_bytes())?;

    // Summary: min energy, min overhead, weighted combination.
    let picks = [
        ("min_energy", combined_optimum(&front_objs, &[1.0, 0.0])?),
        ("min_overhead", combined_optimum(&front_objs, &[0.0, 1.0])?),
        ("combined", combined_optimum(&front_objs, &args.weights)?),
    ];
    let mut csv = String::from("selection,point_id,generation,individual,energy_wh,overhead_s");
    for g in &spec.genes {
        csv.push(',');
        csv.push_str(&g.name);
    }
    csv.push('\n');
    for (label, i) in picks {
        let p = &front[i];
        write!(csv, "{label},{},{},{},{},{}", p.id, p.generation, p.individual, p.objectives[0], p.objectives[1])?;
        for v in encode(&p.parameters) {
            write!(csv, ",{v}")?;
        }
        csv.push('\n');
        println!(
            "{label:<13} point {:>4}  energy {:>14.3} Wh  overhead {:>12.3} s",
            p.id, p.objectives[0], p.objectives[1]
        );
    }
    write_atomic(&out.join("summary.csv"), csv.as_bytes())?;
    let clusters = labels.iter().flatten().max().map_or(0, |m| m + 1);
    let noise = labels.iter().filter(|l| l.is_none()).count();
    println!(
        "{} distinct points, {} on the front, {clusters} clusters, {noise} noise",
        points.len(),
        front.len()
    );
    Ok(())
}
