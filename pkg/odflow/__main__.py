from odflow.cli import main

main()
