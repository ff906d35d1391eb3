fn main() {
    std::process::exit(bomasim::cli::main());
}
