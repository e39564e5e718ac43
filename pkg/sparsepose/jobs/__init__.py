# Jobs package
