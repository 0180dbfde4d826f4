#include "tuckerdiff/cli.hpp"

int main(int argc, char** argv) { return tucker::cli::run(argc, argv); }
