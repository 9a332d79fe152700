fn main() { std::process::exit(cantus::cli::dispatch(std::env::args().collect())); }
