#include "lexinf/cli.hpp"

int main(int argc, char** argv)
{
    return lexinf::cli::run(argc, argv);
}
