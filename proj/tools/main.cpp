#include "cli.hpp"

int main(int argc, char** argv)
{
    return evetac::cli::run(argc, argv);
}
