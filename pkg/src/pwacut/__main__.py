from pwacut.cli import main_entry

main_entry()
