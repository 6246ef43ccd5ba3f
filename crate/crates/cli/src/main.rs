use std::process::ExitCode;

use bdaheap::Heap;
use bdaheap_cli::{run, write_report, Cli, CliError};
use clap::Parser;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("bdaheap: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn execute(cli: &Cli) -> Result<(), CliError> {
    let cfg = cli.run_config()?;
    if cli.debug_geometry {
        println!("{}", Heap::new(cfg.heap.clone())?.dump_geometry());
    }
    let snap_dir = (!cli.no_snapshot_files).then_some(cli.out_dir.as_path());
    let report = run(&cfg, snap_dir)?;
    let path = write_report(&cli.out_dir, &cfg, &report)?;
    println!(
        "{}: ops={} checksum={:#x} get_mean_ns={:.1} objects_per_page={:.2} page_faults={} minor={} full={}",
        report.run_id,
        report.ops,
        report.checksum,
        report.latency.mean_ns,
        report.mean_objects_per_page(),
        report.page_faults,
        report.gc.minor,
        report.gc.full,
    );
    for a in &report.alloc {
        println!(
            "  tracked={} median_ns={:.0} ratio={:.3} [{:.3}, {:.3}] mutator_ratio={:.3} pause_ns={:.0}",
            a.tracked_classes, a.median_ns, a.ratio, a.ratio_low, a.ratio_high, a.mutator_ratio, a.median_pause_ns
        );
    }
    println!("metrics: {}", path.display());
    Ok(())
}
