#include "imooe/cli/commands.hpp"

int main(int argc, char** argv) { return imooe::cli::main(argc, argv); }
