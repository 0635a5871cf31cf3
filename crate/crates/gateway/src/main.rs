fn main() {
    std::process::exit(topicguard_gateway::cli::main());
}
