fn main() {
    std::process::exit(boussinesq_cli::dispatch(std::env::args_os()));
}
