use std::fs;
use std::io::Write;
use std::time::Instant;

use gpz::bench::{generate, run_bench, write_bench_csv, GenKind, GenSpec};
use gpz::container::{Container, GlobalHeader};
use gpz::metrics::{aggregate_psnr, bitrate, compression_ratio, nrmse, pair_blocks, verify_paired};
use gpz::{
    compress as compress_dataset, decompress as decompress_bytes, AnyDataset, CompressConfig, Coordinate, Dataset,
};

use crate::raw::{self, AXIS_NAMES};
use crate::{
    BenchArgs, CliError, CodecArgs, CompressArgs, DecompressArgs, GenArgs, GenSpecArgs, KindArg, StatsArgs, VerifyArgs,
};

fn config(a: &CodecArgs) -> Result<CompressConfig, CliError> {
    let cfg = CompressConfig {
        error_bound: a.eb,
        eb_mode: a.eb_mode.into(),
        block_size: a.block_size,
        target_segs_per_axis: a.segs_per_axis,
        preserve_order: a.preserve_order,
    };
    cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(cfg)
}

fn header_config(h: &GlobalHeader) -> CompressConfig {
    CompressConfig {
        error_bound: h.eb_original,
        eb_mode: h.eb_mode,
        block_size: h.block_size as usize,
        target_segs_per_axis: h.target_segs_per_axis,
        preserve_order: h.preserve_order,
    }
}

fn read_file(path: &std::path::Path) -> Result<Vec<u8>, CliError> {
    fs::read(path).map_err(|e| CliError::io(path, e))
}

pub fn compress(a: CompressArgs) -> Result<(), CliError> {
    let cfg = config(&a.codec)?;
    let dims = match (a.dims, a.input.interleaved) {
        (Some(d), _) => d as usize,
        (None, false) => a.input.input.len(),
        (None, true) => return Err(CliError::Usage("--interleaved needs --dims".into())),
    };
    let ds = raw::load(&a.input.input, a.input.interleaved, a.precision.into(), dims)?;
    let start = Instant::now();
    let bytes = match &ds {
        AnyDataset::F32(d) => compress_dataset(d, &cfg)?,
        AnyDataset::F64(d) => compress_dataset(d, &cfg)?,
    };
    let elapsed = start.elapsed();
    fs::write(&a.output, &bytes).map_err(|e| CliError::io(&a.output, e))?;
    eprintln!(
        "{} particles, {} -> {} bytes, CR {:.3}, {:.3} bits/particle, {:.3} s",
        ds.len(),
        ds.byte_size(),
        bytes.len(),
        compression_ratio(ds.byte_size() as u64, bytes.len() as u64).unwrap_or(f64::NAN),
        bitrate(bytes.len() as u64, ds.len() as u64).unwrap_or(f64::NAN),
        elapsed.as_secs_f64()
    );
    Ok(())
}

pub fn decompress(a: DecompressArgs) -> Result<(), CliError> {
    let bytes = read_file(&a.input)?;
    let start = Instant::now();
    let ds = decompress_bytes(&bytes)?;
    let elapsed = start.elapsed();
    let written = raw::store(&ds, &a.output_prefix, false)?;
    eprintln!("{} particles in {} files, {:.3} s", ds.len(), written.len(), elapsed.as_secs_f64());
    Ok(())
}

fn verify_as<T: Coordinate>(
    original: &Dataset<T>,
    reconstructed: &Dataset<T>,
    header: &GlobalHeader,
) -> Result<usize, CliError> {
    let cfg = header_config(header);
    let pairing = pair_blocks(original, reconstructed, &cfg)?;
    let report = verify_paired(original, reconstructed, header.eb_abs, &pairing);
    let fields = (0..original.dims())
        .map(|a| nrmse(original.axis(a), reconstructed.axis(a), &pairing))
        .collect::<Result<Vec<_>, _>>()?;
    println!("eb_abs      {:e}", header.eb_abs);
    println!("max_error   {:e}", report.max_error);
    println!("violations  {}", report.violations.len());
    for (a, v) in fields.iter().enumerate() {
        println!("nrmse_{}     {v:e}", AXIS_NAMES[a]);
    }
    println!("psnr        {}", aggregate_psnr(&fields)?);
    Ok(report.violations.len())
}

pub fn verify(a: VerifyArgs) -> Result<(), CliError> {
    let bytes = read_file(&a.container)?;
    let header = Container::from_bytes(&bytes)?.header;
    let original = raw::load(&a.original.input, a.original.interleaved, header.precision, header.dims as usize)?;
    let reconstructed = decompress_bytes(&bytes)?;
    let violations = match (&original, &reconstructed) {
        (AnyDataset::F32(o), AnyDataset::F32(r)) => verify_as(o, r, &header)?,
        (AnyDataset::F64(o), AnyDataset::F64(r)) => verify_as(o, r, &header)?,
        _ => unreachable!("original is read in the container's precision"),
    };
    if violations > 0 {
        return Err(CliError::Violations(violations));
    }
    Ok(())
}

pub fn stats(a: StatsArgs) -> Result<(), CliError> {
    let bytes = read_file(&a.input)?;
    let c = Container::from_bytes(&bytes)?;
    let h = &c.header;
    println!("precision       {}", h.precision);
    println!("dims            {}", h.dims);
    println!("particles       {}", h.particle_count);
    println!("blocks          {} of {}", h.block_count, h.block_size);
    println!("segs per axis   {}", h.target_segs_per_axis);
    println!("error bound     {:e} ({:?}), absolute {:e}", h.eb_original, h.eb_mode, h.eb_abs);
    println!("order preserved {}", h.preserve_order);
    println!("file bytes      {}", bytes.len());
    if h.particle_count > 0 {
        println!("bits/particle   {:.4}", bitrate(bytes.len() as u64, h.particle_count)?);
        let raw_bytes = h.particle_count * h.dims as u64 * h.precision.bytes() as u64;
        println!("ratio           {:.4}", compression_ratio(raw_bytes, bytes.len() as u64)?);
    }
    let sizes: Vec<u64> = c.offsets.windows(2).map(|w| w[1] - w[0]).collect();
    if sizes.is_empty() {
        return Ok(());
    }
    let mut buckets = std::collections::BTreeMap::<u32, usize>::new();
    for &s in &sizes {
        *buckets.entry(64 - s.leading_zeros()).or_default() += 1;
    }
    println!(
        "block sizes     min {} max {} mean {:.1}",
        sizes.iter().min().unwrap(),
        sizes.iter().max().unwrap(),
        sizes.iter().sum::<u64>() as f64 / sizes.len() as f64
    );
    for (bits, n) in buckets {
        let lo = if bits == 0 { 0 } else { 1u64 << (bits - 1) };
        let hi = (1u64 << bits) - 1;
        println!("  {lo:>8}..={hi:<8} {n}");
    }
    Ok(())
}

fn gen_spec(a: &GenSpecArgs) -> GenSpec {
    let dims = a.dims as usize;
    let kind = match a.kind {
        KindArg::Uniform => GenKind::UniformBox,
        KindArg::Clusters => GenKind::GaussianClusters { clusters: a.clusters, sigma: a.sigma },
        KindArg::Lattice => {
            let side = (a.count as f64).powf(1.0 / dims as f64).ceil().max(1.0);
            GenKind::JitteredLattice { pitch: a.pitch.unwrap_or(a.extent / side), jitter: a.jitter }
        }
    };
    GenSpec::new(kind, a.count, dims, a.seed).with_extent(a.extent)
}

pub fn gen(a: GenArgs) -> Result<(), CliError> {
    let spec = gen_spec(&a.spec);
    let ds: AnyDataset = match a.spec.precision.into() {
        gpz::Precision::F32 => generate::<f32>(&spec).map_err(usage)?.into(),
        gpz::Precision::F64 => generate::<f64>(&spec).map_err(usage)?.into(),
    };
    for path in raw::store(&ds, &a.output_prefix, a.interleaved)? {
        eprintln!("wrote {}", path.display());
    }
    Ok(())
}

fn usage(e: gpz::GpzError) -> CliError {
    CliError::Usage(e.to_string())
}

pub fn bench(a: BenchArgs) -> Result<(), CliError> {
    let spec = gen_spec(&a.spec);
    let cfg = CompressConfig {
        error_bound: a.eb.first().copied().unwrap_or(0.0),
        eb_mode: a.eb_mode.into(),
        block_size: a.block_size,
        target_segs_per_axis: a.segs_per_axis,
        preserve_order: a.preserve_order,
    };
    for &eb in &a.eb {
        CompressConfig { error_bound: eb, ..cfg.clone() }.validate().map_err(usage)?;
    }
    if a.repetitions == 0 {
        return Err(CliError::Usage("--repetitions must be positive".into()));
    }
    let rows = match a.spec.precision.into() {
        gpz::Precision::F32 => run_bench::<f32>(&spec, &a.eb, &cfg, a.repetitions)?,
        gpz::Precision::F64 => run_bench::<f64>(&spec, &a.eb, &cfg, a.repetitions)?,
    };
    let mut csv = Vec::new();
    write_bench_csv(&rows, &mut csv)?;
    match &a.output {
        Some(path) => fs::write(path, &csv).map_err(|e| CliError::io(path, e))?,
        None => std::io::stdout().write_all(&csv).map_err(|e| CliError::Io(e.to_string()))?,
    }
    Ok(())
}
