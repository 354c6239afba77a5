#include "cli.hpp"

int main(int argc, char** argv) { return spatsurv::cli::run(std::vector<std::string>(argv, argv + argc)); }
