#include "ram/cli.hpp"

int main(int argc, char** argv) { return ram::run_cli(argc, argv); }
