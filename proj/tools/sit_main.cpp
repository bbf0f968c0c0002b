#include "sit/cli.hpp"

int main(int argc, char** argv) { return sit::cli::run(argc, argv); }
