//! `latentnav`: learn a latent map of a toured world, plan geodesic paths
//! in it, and turn them into frame routes.

mod args;
mod commands;
mod config;
mod output;

use args::Args;

const USAGE: &str = "\
latentnav <command> [--flag value ...]

commands:
  gen-data   --out DIR [--config FILE] [--seed N]
             render a synthetic tour (tour.json + tour.raw)
  ingest     --input DIR --out DIR [--config FILE] [--height H] [--width W]
             read PPM/PGM frames, resize, write a dataset
  train      --dataset FILE --out DIR [--config FILE] [--seed N]
             fit the model (model.ckpt + loss_history.txt)
  slice      --checkpoint FILE --out DIR [--dims A,B] [--grid G]
             [--lo X] [--hi X] [--fixed X]
             decode a latent grid into a PPM montage (slice.ppm)
  plan       --checkpoint FILE --dataset FILE --start I --end I --out DIR
             [--config FILE]
             geodesic between two frames (path.txt + length_history.txt)
  route      --checkpoint FILE --dataset FILE --path FILE --out DIR
             match a path to frames (route.txt + strip PPMs)
  eval       --checkpoint FILE --dataset FILE --route FILE [--route FILE ...]
             --out DIR [--config FILE] [--seed N] [--bins N]
             score routes (eval.json)
  oracle     --checkpoint FILE --dataset FILE --start I --end I --out DIR
             [--config FILE] [--k N]
             graph-search route between two frames (route_oracle.txt)
  gradcheck  [--config FILE] [--seed N] [--trials N]
             verify analytic gradients against finite differences

Flags given on the command line override values from --config, which
override the built-in defaults.";

fn main() {
    let argv: Vec<String> = std::env::args().skip(1).collect();
    let Some((command, rest)) = argv.split_first() else {
        eprintln!("{USAGE}");
        std::process::exit(2);
    };

    let result = Args::parse(rest).and_then(|args| match command.as_str() {
        "gen-data" => commands::cmd_gen_data(args),
        "ingest" => commands::cmd_ingest(args),
        "train" => commands::cmd_train(args),
        "slice" => commands::cmd_slice(args),
        "plan" => commands::cmd_plan(args),
        "route" => commands::cmd_route(args),
        "eval" => commands::cmd_eval(args),
        "oracle" => commands::cmd_oracle(args),
        "gradcheck" => commands::cmd_gradcheck(args),
        other => {
            eprintln!("unknown command {other:?}\n\n{USAGE}");
            std::process::exit(2);
        }
    });

    if let Err(error) = result {
        eprintln!("error: {error}");
        std::process::exit(1);
    }
}
