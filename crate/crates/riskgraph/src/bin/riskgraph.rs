fn main() {
    std::process::exit(riskgraph::cli::main());
}
