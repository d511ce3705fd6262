#include "nssm/cli.hpp"

int main(int argc, char** argv) { return nssm::cli::run(argc, argv); }
