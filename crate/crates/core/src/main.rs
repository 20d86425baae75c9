fn main() {
    let code = cluster_gcn::cli::run(std::env::args());
    std::process::exit(code);
}
