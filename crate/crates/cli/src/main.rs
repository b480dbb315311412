use std::io::Write;

fn main() {
    let env_seed = std::env::var(saddle_es_cli::SEED_ENV).ok();
    let mut stdout = std::io::stdout().lock();
    let mut stderr = std::io::stderr().lock();
    let code = saddle_es_cli::main_with(std::env::args_os(), env_seed.as_deref(), &mut stdout, &mut stderr);
    let _ = stdout.flush();
    std::process::exit(code);
}
