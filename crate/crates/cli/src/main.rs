use std::io::IsTerminal;

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let stdin = std::io::stdin();
    let echo = !stdin.is_terminal();
    let mut stdin = stdin.lock();
    let mut out = std::io::stdout().lock();
    let mut err = std::io::stderr().lock();
    let mut io = minigrid_cli::Io {
        stdin: &mut stdin,
        out: &mut out,
        err: &mut err,
        env_config: std::env::var_os(minigrid::config::CONF_ENV).map(Into::into),
        echo,
    };
    let code = minigrid_cli::run(std::env::args_os(), &mut io);
    drop(io);
    std::process::exit(code);
}
