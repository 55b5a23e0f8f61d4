//! `bench`: single-threaded kernel timings and fitted log-log slopes.

use std::io::Write;

use anyhow::{bail, Context};

use m4d_core::scaling::{bench_kernel, runtime_slope, BenchKernel, BenchPolicy};

/// Parses `256,512,...,8192`: an `...` between `a` and `b` inserts the powers
/// of two `2a, 4a, ...` below `b`, which must itself be such a power.
pub fn parse_lengths(s: &str) -> anyhow::Result<Vec<usize>> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    let mut out: Vec<usize> = Vec::new();
    let mut fill = false;
    for p in parts {
        if p == "..." {
            if out.is_empty() || fill {
                bail!("misplaced '...' in {s:?}");
            }
            fill = true;
            continue;
        }
        let v: usize = p.parse().with_context(|| format!("bad length {p:?}"))?;
        if v == 0 {
            bail!("lengths must be positive");
        }
        if std::mem::take(&mut fill) {
            let mut cur = *out.last().unwrap_or(&v);
            while cur * 2 < v {
                cur *= 2;
                out.push(cur);
            }
            if cur * 2 != v {
                bail!("'...' needs a power-of-two ratio, got {} to {v}", out.last().unwrap_or(&v));
            }
        }
        out.push(v);
    }
    if fill {
        bail!("'...' needs an upper bound in {s:?}");
    }
    if out.is_empty() {
        bail!("no lengths given");
    }
    Ok(out)
}

pub fn parse_kernels(s: &str) -> anyhow::Result<Vec<BenchKernel>> {
    let ks = s.split(',').map(|k| k.trim().parse::<BenchKernel>()).collect::<m4d_core::Result<Vec<_>>>()?;
    if ks.is_empty() {
        bail!("no kernels given");
    }
    Ok(ks)
}

pub fn bench(lengths: &str, kernels: &str, d: usize, seed: u64, out: &mut dyn Write) -> anyhow::Result<()> {
    let lengths = parse_lengths(lengths)?;
    let kernels = parse_kernels(kernels)?;
    // Timings are single-threaded; an already built global pool is fine as the kernels never use it.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(1).build_global();
    let mut records = Vec::new();
    for &k in &kernels {
        for &len in &lengths {
            let r = bench_kernel(k, len, d, BenchPolicy::default(), seed)?;
            writeln!(out, "{r}")?;
            out.flush()?;
            records.push(r);
        }
    }
    if lengths.len() >= 2 {
        for &k in &kernels {
            writeln!(out, "slope kernel={k} value={:.4}", runtime_slope(&records, k)?)?;
        }
    }
    Ok(())
}
